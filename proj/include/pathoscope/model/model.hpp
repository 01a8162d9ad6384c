#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pathoscope/data/patchset.hpp"
#include "pathoscope/neural/network.hpp"

namespace pathoscope::model {

struct TrainConfig {
  int epochs = 500;
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 64;
  std::uint64_t seed = 0;
  bool shuffle_each_epoch = true;

  /// ConfigInvalid unless epochs >= 1, batch_size >= 1, learning_rate >= 0
  /// and momentum in [0, 1).
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct Provenance {
  std::string dataset_hash;  // sha256 of the serialized patch cache, hex
  TrainConfig train;
  data::PatchSpec patch_spec;  // how inputs must be prepared at inference

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct TrainedModel {
  nn::Network<float> network;
  std::vector<double> history;  // mean batch loss per completed epoch
  Provenance provenance;

  const nn::NetworkConfig& config() const { return network.config(); }
  int patch_size() const { return static_cast<int>(network.config().patch_size); }
};

/// Untrained model with Glorot-uniform weights. PatchTooSmall below 8.
TrainedModel build_network(int patch_size, std::uint64_t seed);

struct EpochEvent {
  int epoch = 0;  // 1-based
  int epochs = 0;
  double mean_loss = 0.0;
};

/// Called after every epoch; returning false stops training there.
using ProgressSink = std::function<bool(const EpochEvent&)>;

/// Mini-batch SGD with momentum on mean softmax cross-entropy.
/// SingleClassDataset unless split.train holds both labels; DivergedLoss on a
/// non-finite batch loss; ShapeMismatch when patch sizes differ from the model.
TrainedModel train(TrainedModel model, const data::DatasetSplit& split, const TrainConfig& config,
                   const ProgressSink& progress = {});

/// Positive-class softmax probability. ShapeMismatch on a wrong patch size.
double predict_patch(const TrainedModel& model, const data::Patch& patch);
std::vector<double> predict_patches(const TrainedModel& model, std::span<const data::Patch> patches);

std::string dataset_hash(const data::DatasetSplit& split, const data::BuildConfig& build);

// File layout, inside the framed container with magic "PSCN", version 1:
//   u32 patch_size | u32 tensor count, then per tensor: str name, u32 rank, u32 dims
//   provenance: str dataset_hash | i32 epochs | f64 lr | f64 momentum | i32 batch
//     | u64 seed | u8 shuffle | patch spec (i32 x4, str label)
//   u32 n + f64 history | f32 weights per tensor, in the order listed
inline constexpr std::uint32_t kModelVersion = 1;

std::vector<std::uint8_t> serialize_model(const TrainedModel& model);
TrainedModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& path);

/// "epoch,mean_loss" rows, 1-based.
std::string loss_log_csv(const std::vector<double>& history);

}  // namespace pathoscope::model
