#include "pathoscope/workbench/config.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "pathoscope/core/binary_io.hpp"
#include "pathoscope/core/error.hpp"

namespace pathoscope::workbench {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Text {
 public:
  Text& add(const std::string& key, const std::string& value) {
    out_ += key + " = " + value + "\n";
    return *this;
  }
  Text& add(const std::string& key, long long value) { return add(key, std::to_string(value)); }
  Text& add(const std::string& key, int value) { return add(key, std::to_string(value)); }
  Text& add(const std::string& key, std::uint64_t value) { return add(key, std::to_string(value)); }
  Text& add(const std::string& key, double value) { return add(key, num(value)); }
  Text& add(const std::string& key, bool value) { return add(key, std::string(value ? "true" : "false")); }
  std::string str() const { return out_; }

 private:
  std::string out_;
};

}  // namespace

KeyValues KeyValues::parse(const std::string& text, const std::string& origin) {
  KeyValues kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ConfigInvalid, origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw Error(ErrorCode::ConfigInvalid, origin + ":" + std::to_string(lineno) + ": empty key");
    if (kv.values_.count(key)) {
      throw Error(ErrorCode::ConfigInvalid, origin + ":" + std::to_string(lineno) + ": duplicate key " + key);
    }
    kv.values_[key] = value;
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse(std::string(bytes.begin(), bytes.end()), path.string());
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

long long KeyValues::get_int(const std::string& key, long long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(it->second, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != it->second.size()) {
    throw Error(ErrorCode::ConfigInvalid, origin_ + ": " + key + " expects an integer, got '" + it->second + "'");
  }
  return v;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(it->second, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != it->second.size()) {
    throw Error(ErrorCode::ConfigInvalid, origin_ + ": " + key + " expects a number, got '" + it->second + "'");
  }
  return v;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw Error(ErrorCode::ConfigInvalid, origin_ + ": " + key + " expects true or false, got '" + it->second + "'");
}

void KeyValues::require_known(const std::set<std::string>& allowed) const {
  for (const auto& [k, v] : values_) {
    if (!allowed.count(k)) throw Error(ErrorCode::ConfigInvalid, origin_ + ": unknown key '" + k + "'");
  }
}

std::string synth_config_text(const synth::SynthConfig& c) {
  return Text()
      .add("n_images", c.n_images)
      .add("image_size", c.image_size)
      .add("objects_min", c.objects_per_image.min)
      .add("objects_max", c.objects_per_image.max)
      .add("axes_min", c.object_axes.min)
      .add("axes_max", c.object_axes.max)
      .add("intensity_min", c.object_intensity.min)
      .add("intensity_max", c.object_intensity.max)
      .add("confounders_min", c.confounders_per_image.min)
      .add("confounders_max", c.confounders_per_image.max)
      .add("noise_std", c.background_noise_std)
      .add("label", c.label)
      .add("seed", c.seed)
      .str();
}

synth::SynthConfig synth_config_from(const KeyValues& kv) {
  kv.require_known({"n_images", "image_size", "objects_min", "objects_max", "axes_min", "axes_max", "intensity_min",
                    "intensity_max", "confounders_min", "confounders_max", "noise_std", "label", "seed"});
  synth::SynthConfig c;
  c.n_images = static_cast<int>(kv.get_int("n_images", c.n_images));
  c.image_size = static_cast<int>(kv.get_int("image_size", c.image_size));
  c.objects_per_image.min = static_cast<int>(kv.get_int("objects_min", c.objects_per_image.min));
  c.objects_per_image.max = static_cast<int>(kv.get_int("objects_max", c.objects_per_image.max));
  c.object_axes.min = kv.get_double("axes_min", c.object_axes.min);
  c.object_axes.max = kv.get_double("axes_max", c.object_axes.max);
  c.object_intensity.min = kv.get_double("intensity_min", c.object_intensity.min);
  c.object_intensity.max = kv.get_double("intensity_max", c.object_intensity.max);
  c.confounders_per_image.min = static_cast<int>(kv.get_int("confounders_min", c.confounders_per_image.min));
  c.confounders_per_image.max = static_cast<int>(kv.get_int("confounders_max", c.confounders_per_image.max));
  c.background_noise_std = kv.get_double("noise_std", c.background_noise_std);
  c.label = kv.get_string("label", c.label);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.validate();
  return c;
}

std::string build_config_text(const data::BuildConfig& c) {
  return Text()
      .add("downsample_factor", c.spec.downsample_factor)
      .add("patch_size", c.spec.patch_size)
      .add("stride", c.spec.stride)
      .add("neg_cap_ratio", c.spec.neg_cap_ratio)
      .add("target_label", c.spec.target_label)
      .add("negatives_per_image", static_cast<std::uint64_t>(c.negatives_per_image))
      .add("split_mode", std::string(c.mode == data::SplitMode::ByImage ? "image" : "patch"))
      .add("seed", c.seed)
      .str();
}

data::BuildConfig build_config_from(const KeyValues& kv) {
  kv.require_known({"downsample_factor", "patch_size", "stride", "neg_cap_ratio", "target_label",
                    "negatives_per_image", "split_mode", "seed"});
  data::BuildConfig c;
  c.spec.downsample_factor = static_cast<int>(kv.get_int("downsample_factor", c.spec.downsample_factor));
  c.spec.patch_size = static_cast<int>(kv.get_int("patch_size", c.spec.patch_size));
  c.spec.stride = static_cast<int>(kv.get_int("stride", std::max(1, c.spec.patch_size / 4)));
  c.spec.neg_cap_ratio = static_cast<int>(kv.get_int("neg_cap_ratio", c.spec.neg_cap_ratio));
  c.spec.target_label = kv.get_string("target_label", c.spec.target_label);
  const auto negatives = kv.get_int("negatives_per_image", static_cast<long long>(c.negatives_per_image));
  if (negatives < 0) throw Error(ErrorCode::ConfigInvalid, "negatives_per_image must be >= 0");
  c.negatives_per_image = static_cast<std::size_t>(negatives);
  const auto mode = kv.get_string("split_mode", "image");
  if (mode == "image") {
    c.mode = data::SplitMode::ByImage;
  } else if (mode == "patch") {
    c.mode = data::SplitMode::ByPatch;
  } else {
    throw Error(ErrorCode::ConfigInvalid, "split_mode must be 'image' or 'patch', got '" + mode + "'");
  }
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  c.spec.validate();
  return c;
}

std::string train_config_text(const model::TrainConfig& c) {
  return Text()
      .add("epochs", c.epochs)
      .add("learning_rate", c.learning_rate)
      .add("momentum", c.momentum)
      .add("batch_size", c.batch_size)
      .add("shuffle_each_epoch", c.shuffle_each_epoch)
      .add("seed", c.seed)
      .str();
}

model::TrainConfig train_config_from(const KeyValues& kv) {
  kv.require_known({"epochs", "learning_rate", "momentum", "batch_size", "shuffle_each_epoch", "seed"});
  model::TrainConfig c;
  c.epochs = static_cast<int>(kv.get_int("epochs", c.epochs));
  c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
  c.momentum = kv.get_double("momentum", c.momentum);
  c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
  c.shuffle_each_epoch = kv.get_bool("shuffle_each_epoch", c.shuffle_each_epoch);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  c.validate();
  return c;
}

std::string detector_config_text(const detect::DetectorConfig& c) {
  return Text()
      .add("stride", c.stride)
      .add("probability_threshold", c.probability_threshold)
      .add("overlap_threshold", c.overlap_threshold)
      .str();
}

detect::DetectorConfig detector_config_from(const KeyValues& kv, int patch_size) {
  kv.require_known({"stride", "probability_threshold", "overlap_threshold", "threads"});
  detect::DetectorConfig c;
  c.stride = static_cast<int>(kv.get_int("stride", detect::default_stride(patch_size)));
  c.probability_threshold = kv.get_double("probability_threshold", c.probability_threshold);
  c.overlap_threshold = kv.get_double("overlap_threshold", c.overlap_threshold);
  c.threads = static_cast<int>(kv.get_int("threads", c.threads));
  c.validate();
  return c;
}

std::string extra_trees_config_text(const eval::ExtraTreesConfig& c) {
  return Text()
      .add("n_trees", c.n_trees)
      .add("k_candidate_features", c.k_candidate_features)
      .add("n_min_leaf", c.n_min_leaf)
      .add("seed", c.seed)
      .str();
}

eval::ExtraTreesConfig extra_trees_config_from(const KeyValues& kv) {
  kv.require_known({"n_trees", "k_candidate_features", "n_min_leaf", "seed"});
  eval::ExtraTreesConfig c;
  c.n_trees = static_cast<int>(kv.get_int("n_trees", c.n_trees));
  c.k_candidate_features = static_cast<int>(kv.get_int("k_candidate_features", c.k_candidate_features));
  c.n_min_leaf = static_cast<int>(kv.get_int("n_min_leaf", c.n_min_leaf));
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  c.validate();
  return c;
}

}  // namespace pathoscope::workbench
