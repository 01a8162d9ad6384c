#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "pathoscope/data/patchset.hpp"
#include "pathoscope/detect/detector.hpp"
#include "pathoscope/eval/extra_trees.hpp"
#include "pathoscope/model/model.hpp"
#include "pathoscope/synth/synthgen.hpp"

namespace pathoscope::workbench {

// Config files hold one `key = value` per line; `#` starts a comment, blank
// lines are ignored. Keys are checked against each subcommand's schema.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& origin = "<config>");
  static KeyValues load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// ConfigInvalid naming the first key outside `allowed`.
  void require_known(const std::set<std::string>& allowed) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
};

// Canonical `key = value` text of a resolved config; its sha256 is the
// config hash recorded in run.json.
std::string synth_config_text(const synth::SynthConfig& c);
std::string build_config_text(const data::BuildConfig& c);
std::string train_config_text(const model::TrainConfig& c);
std::string detector_config_text(const detect::DetectorConfig& c);
std::string extra_trees_config_text(const eval::ExtraTreesConfig& c);

synth::SynthConfig synth_config_from(const KeyValues& kv);
data::BuildConfig build_config_from(const KeyValues& kv);
model::TrainConfig train_config_from(const KeyValues& kv);
detect::DetectorConfig detector_config_from(const KeyValues& kv, int patch_size);
eval::ExtraTreesConfig extra_trees_config_from(const KeyValues& kv);

}  // namespace pathoscope::workbench
