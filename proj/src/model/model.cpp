#include "pathoscope/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "pathoscope/core/binary_io.hpp"
#include "pathoscope/core/error.hpp"
#include "pathoscope/core/framed_file.hpp"
#include "pathoscope/core/hashing.hpp"
#include "pathoscope/core/rng.hpp"
#include "pathoscope/data/patch_cache.hpp"
#include "pathoscope/neural/optimizer.hpp"

namespace pathoscope::model {

namespace {

constexpr Magic kMagic = {'P', 'S', 'C', 'N'};

void to_planar(const data::Patch& patch, float* out) {
  const std::size_t n = static_cast<std::size_t>(patch.size) * patch.size;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) out[c * n + i] = patch.pixels[i * 3 + c];
}

void check_patch(const TrainedModel& model, const data::Patch& patch) {
  if (patch.size != model.patch_size() || patch.pixels.size() != model.config().input_size()) {
    throw Error(ErrorCode::ShapeMismatch, "patch size " + std::to_string(patch.size) + " does not match model input " +
                                              std::to_string(model.patch_size()));
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::ConfigInvalid, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::ConfigInvalid, "batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::ConfigInvalid, "learning_rate must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::ConfigInvalid, "momentum must be in [0, 1)");
}

TrainedModel build_network(int patch_size, std::uint64_t seed) {
  if (patch_size < static_cast<int>(nn::NetworkConfig::kMinPatchSize)) {
    throw Error(ErrorCode::PatchTooSmall, "patch_size " + std::to_string(patch_size) + " is below 8");
  }
  nn::NetworkConfig cfg;
  cfg.patch_size = static_cast<std::size_t>(patch_size);
  TrainedModel m{nn::Network<float>::initialized(cfg, seed), {}, {}};
  m.provenance.patch_spec.patch_size = patch_size;
  return m;
}

TrainedModel train(TrainedModel model, const data::DatasetSplit& split, const TrainConfig& config,
                   const ProgressSink& progress) {
  config.validate();
  const auto& patches = split.train;
  const bool has_pos = std::any_of(patches.begin(), patches.end(), [](const auto& p) { return p.label == data::PatchLabel::Positive; });
  const bool has_neg = std::any_of(patches.begin(), patches.end(), [](const auto& p) { return p.label == data::PatchLabel::Negative; });
  if (!has_pos || !has_neg) throw Error(ErrorCode::SingleClassDataset, "training split must contain both classes");

  const std::size_t in = model.config().input_size();
  std::vector<float> inputs(patches.size() * in);
  std::vector<std::size_t> labels(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    check_patch(model, patches[i]);
    to_planar(patches[i], inputs.data() + i * in);
    labels[i] = static_cast<std::size_t>(patches[i].label);
  }

  auto& net = model.network;
  auto grads = nn::Parameters<float>::zeros(net.config());
  auto velocity = nn::Parameters<float>::zeros(net.config());
  nn::Trace<float> trace;
  std::vector<std::size_t> order(patches.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const auto lr = static_cast<float>(config.learning_rate);
  const auto mom = static_cast<float>(config.momentum);
  model.provenance.train = config;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle_each_epoch) {
      Rng rng(derive_seed(config.seed, "epoch/" + std::to_string(epoch)));
      shuffle(order.begin(), order.end(), rng);
    }
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      grads.fill(0.0f);
      double batch_loss = 0.0;
      try {
        for (std::size_t k = start; k < end; ++k) {
          const std::size_t i = order[k];
          batch_loss +=
              net.accumulate_gradient(std::span<const float>(inputs.data() + i * in, in), labels[i], grads, trace);
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFinite) throw;
        batch_loss = std::numeric_limits<double>::quiet_NaN();
      }
      const double count = static_cast<double>(end - start);
      batch_loss /= count;
      if (!std::isfinite(batch_loss)) {
        throw Error(ErrorCode::DivergedLoss, "non-finite loss in epoch " + std::to_string(epoch));
      }
      const float scale = static_cast<float>(1.0 / count);
      auto p = net.parameters().tensors();
      auto g = grads.tensors();
      auto v = velocity.tensors();
      for (std::size_t t = 0; t < p.size(); ++t) {
        for (auto& x : g[t]->data()) x *= scale;
        nn::sgd_step(*p[t], *g[t], lr, mom, *v[t]);
      }
      loss_sum += batch_loss;
      ++n_batches;
    }
    const double mean = loss_sum / static_cast<double>(n_batches);
    model.history.push_back(mean);
    if (progress && !progress({epoch, config.epochs, mean})) break;
  }
  for (const auto* t : net.parameters().tensors()) t->require_finite("trained weights");
  return model;
}

double predict_patch(const TrainedModel& model, const data::Patch& patch) {
  check_patch(model, patch);
  std::vector<float> planar(model.config().input_size());
  to_planar(patch, planar.data());
  nn::Trace<float> trace;
  model.network.forward(planar, trace);
  const auto probs = nn::softmax(nn::Tensor<float>({2}, trace.logits));
  return static_cast<double>(probs.data()[1]);
}

std::vector<double> predict_patches(const TrainedModel& model, std::span<const data::Patch> patches) {
  std::vector<double> out;
  out.reserve(patches.size());
  for (const auto& p : patches) out.push_back(predict_patch(model, p));
  return out;
}

std::string dataset_hash(const data::DatasetSplit& split, const data::BuildConfig& build) {
  return sha256_hex(data::serialize_patch_cache({build, split}));
}

std::vector<std::uint8_t> serialize_model(const TrainedModel& model) {
  ByteWriter w;
  const auto& params = model.network.parameters();
  const auto tensors = params.tensors();
  w.put(static_cast<std::uint32_t>(model.config().patch_size));
  w.put(static_cast<std::uint32_t>(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    w.put_string(std::string(nn::kParameterNames[i]));
    w.put(static_cast<std::uint32_t>(tensors[i]->shape().size()));
    for (auto d : tensors[i]->shape()) w.put(static_cast<std::uint32_t>(d));
  }
  const auto& pv = model.provenance;
  w.put_string(pv.dataset_hash);
  w.put(static_cast<std::int32_t>(pv.train.epochs));
  w.put(pv.train.learning_rate);
  w.put(pv.train.momentum);
  w.put(static_cast<std::int32_t>(pv.train.batch_size));
  w.put(pv.train.seed);
  w.put(static_cast<std::uint8_t>(pv.train.shuffle_each_epoch));
  w.put(static_cast<std::int32_t>(pv.patch_spec.downsample_factor));
  w.put(static_cast<std::int32_t>(pv.patch_spec.patch_size));
  w.put(static_cast<std::int32_t>(pv.patch_spec.stride));
  w.put(static_cast<std::int32_t>(pv.patch_spec.neg_cap_ratio));
  w.put_string(pv.patch_spec.target_label);
  w.put(static_cast<std::uint32_t>(model.history.size()));
  w.put_array(std::span<const double>(model.history));
  for (const auto* t : tensors) w.put_array(std::span<const float>(t->data()));
  return frame(kMagic, kModelVersion, w.bytes());
}

TrainedModel deserialize_model(std::span<const std::uint8_t> bytes) {
  const auto unframed = unframe(kMagic, kModelVersion, bytes);
  ByteReader r(unframed.body);
  nn::NetworkConfig cfg;
  cfg.patch_size = r.get<std::uint32_t>();
  cfg.validate();
  auto params = nn::Parameters<float>::zeros(cfg);
  auto tensors = params.tensors();
  if (r.get<std::uint32_t>() != tensors.size()) throw Error(ErrorCode::ParseError, "unexpected tensor count");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (r.get_string() != nn::kParameterNames[i]) throw Error(ErrorCode::ParseError, "unexpected tensor name");
    const auto rank = r.get<std::uint32_t>();
    if (rank != tensors[i]->shape().size()) throw Error(ErrorCode::ParseError, "unexpected tensor rank");
    for (std::uint32_t d = 0; d < rank; ++d) {
      if (r.get<std::uint32_t>() != tensors[i]->shape()[d]) throw Error(ErrorCode::ParseError, "unexpected tensor shape");
    }
  }
  Provenance pv;
  pv.dataset_hash = r.get_string();
  pv.train.epochs = r.get<std::int32_t>();
  pv.train.learning_rate = r.get<double>();
  pv.train.momentum = r.get<double>();
  pv.train.batch_size = r.get<std::int32_t>();
  pv.train.seed = r.get<std::uint64_t>();
  pv.train.shuffle_each_epoch = r.get<std::uint8_t>() != 0;
  pv.patch_spec.downsample_factor = r.get<std::int32_t>();
  pv.patch_spec.patch_size = r.get<std::int32_t>();
  pv.patch_spec.stride = r.get<std::int32_t>();
  pv.patch_spec.neg_cap_ratio = r.get<std::int32_t>();
  pv.patch_spec.target_label = r.get_string();
  std::vector<double> history(r.get<std::uint32_t>());
  r.get_array(std::span<double>(history));
  for (auto* t : tensors) {
    std::vector<float> values(t->size());
    r.get_array(std::span<float>(values));
    *t = nn::Tensor<float>(t->shape(), std::move(values));
  }
  if (r.remaining() != 0) throw Error(ErrorCode::ParseError, "trailing bytes in model body");
  return {nn::Network<float>(cfg, std::move(params)), std::move(history), std::move(pv)};
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  write_file_atomic(path, serialize_model(model));
}

TrainedModel load_model(const std::filesystem::path& path) { return deserialize_model(read_file_bytes(path)); }

std::string loss_log_csv(const std::vector<double>& history) {
  std::string out = "epoch,mean_loss\n";
  char buf[64];
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, history[i]);
    out += buf;
  }
  return out;
}

}  // namespace pathoscope::model
