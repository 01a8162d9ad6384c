#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>

#include "pathoscope/core/binary_io.hpp"
#include "pathoscope/core/error.hpp"
#include "pathoscope/core/rng.hpp"
#include "pathoscope/model/model.hpp"

using namespace pathoscope;
using namespace pathoscope::model;
using data::Patch;
using data::PatchLabel;

namespace {

Patch random_patch(int size, PatchLabel label, Rng& rng) {
  Patch p;
  p.size = size;
  p.label = label;
  p.pixels.resize(static_cast<std::size_t>(size) * size * 3);
  for (auto& v : p.pixels) v = static_cast<float>(uniform01(rng));
  return p;
}

data::DatasetSplit random_split(int size, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  data::DatasetSplit s;
  for (std::size_t i = 0; i < n; ++i) s.train.push_back(random_patch(size, i % 2 ? PatchLabel::Positive : PatchLabel::Negative, rng));
  return s;
}

std::size_t closed_form(std::size_t p) {
  const std::size_t c1 = p - 2, pool = c1 / 2, c2 = pool - 1, flat = 12 * c2 * c2;
  return 7 * (3 * 3 * 3 + 1) + 12 * (7 * 2 * 2 + 1) + (flat * 500 + 500) + (500 * 2 + 2);
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvariantViolation;
}

}  // namespace

TEST(BuildNetwork, ShapeLawAt32) {
  const auto m = build_network(32, 1);
  const auto& c = m.config();
  EXPECT_EQ(c.conv1_out(), 30u);
  EXPECT_EQ(c.pool_out(), 15u);
  EXPECT_EQ(c.conv2_out(), 14u);
  EXPECT_EQ(c.flatten_size(), 2352u);
  EXPECT_EQ(m.network.parameters().conv1_w.size() + m.network.parameters().conv1_b.size(), 196u);
}

TEST(BuildNetwork, ParameterCountMatchesClosedFormForEveryPatchSize) {
  for (int p = 8; p <= 64; ++p) {
    const auto m = build_network(p, 3);
    EXPECT_EQ(m.network.parameters().total_size(), closed_form(static_cast<std::size_t>(p))) << p;
    EXPECT_EQ(m.config().parameter_count(), closed_form(static_cast<std::size_t>(p))) << p;
  }
}

TEST(BuildNetwork, TooSmallPatchRejected) {
  EXPECT_EQ(code_of([] { build_network(7, 0); }), ErrorCode::PatchTooSmall);
  EXPECT_NO_THROW(build_network(8, 0));
}

TEST(BuildNetwork, SameSeedSameWeights) {
  EXPECT_EQ(build_network(16, 9).network.parameters(), build_network(16, 9).network.parameters());
  EXPECT_FALSE(build_network(16, 9).network.parameters() == build_network(16, 10).network.parameters());
}

TEST(Train, OverfitsTwentyPatches) {
  const auto split = random_split(12, 20, 5);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.seed = 1;
  const auto m = train(build_network(12, 2), split, cfg);
  ASSERT_EQ(m.history.size(), 200u);
  std::size_t correct = 0;
  for (const auto& p : split.train) {
    const double prob = predict_patch(m, p);
    correct += (prob > 0.5) == (p.label == PatchLabel::Positive);
    if (p.label == PatchLabel::Positive) EXPECT_GT(prob, 0.9);
  }
  EXPECT_EQ(correct, split.train.size());
  EXPECT_LE(m.history.back(), m.history.front());
}

TEST(Train, FinalLossNotAboveFirstOnSeveralSeeds) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const auto split = random_split(10, 30, seed);
    TrainConfig cfg;
    cfg.epochs = 15;
    cfg.batch_size = 8;
    cfg.seed = seed;
    const auto m = train(build_network(10, seed), split, cfg);
    EXPECT_LE(m.history.back(), m.history.front()) << seed;
  }
}

TEST(Train, ZeroLearningRateLeavesWeightsUnchanged) {
  const auto split = random_split(10, 8, 4);
  const auto init = build_network(10, 4);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.learning_rate = 0.0;
  const auto m = train(init, split, cfg);
  EXPECT_EQ(m.network.parameters(), init.network.parameters());
  EXPECT_EQ(m.history.size(), 1u);
}

TEST(Train, DeterministicSerializedBytes) {
  const auto split = random_split(10, 16, 7);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 5;
  cfg.seed = 99;
  const auto a = serialize_model(train(build_network(10, 1), split, cfg));
  const auto b = serialize_model(train(build_network(10, 1), split, cfg));
  EXPECT_EQ(a, b);
}

TEST(Train, SingleClassRejected) {
  auto split = random_split(10, 6, 1);
  for (auto& p : split.train) p.label = PatchLabel::Negative;
  EXPECT_EQ(code_of([&] { train(build_network(10, 1), split, TrainConfig{}); }), ErrorCode::SingleClassDataset);
  split.train.clear();
  EXPECT_EQ(code_of([&] { train(build_network(10, 1), split, TrainConfig{}); }), ErrorCode::SingleClassDataset);
}

TEST(Train, DivergenceDetected) {
  const auto split = random_split(10, 8, 2);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 1e12;
  cfg.momentum = 0.0;
  EXPECT_EQ(code_of([&] { train(build_network(10, 1), split, cfg); }), ErrorCode::DivergedLoss);
}

TEST(Train, ProgressSinkCanInterrupt) {
  const auto split = random_split(10, 8, 3);
  TrainConfig cfg;
  cfg.epochs = 10;
  std::vector<int> seen;
  const auto m = train(build_network(10, 1), split, cfg, [&](const EpochEvent& e) {
    seen.push_back(e.epoch);
    EXPECT_EQ(e.epochs, 10);
    return e.epoch < 4;
  });
  EXPECT_EQ(seen, (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(m.history.size(), 4u);
}

TEST(Train, InvalidConfigAndShapeMismatch) {
  const auto split = random_split(10, 8, 3);
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_EQ(code_of([&] { train(build_network(10, 1), split, cfg); }), ErrorCode::ConfigInvalid);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_EQ(code_of([&] { train(build_network(10, 1), split, cfg); }), ErrorCode::ConfigInvalid);
  cfg = TrainConfig{};
  cfg.epochs = 1;
  EXPECT_EQ(code_of([&] { train(build_network(12, 1), split, cfg); }), ErrorCode::ShapeMismatch);
}

TEST(Predict, ProbabilitiesInUnitIntervalAndShapeChecked) {
  Rng rng(3);
  const auto m = build_network(16, 5);
  for (int i = 0; i < 20; ++i) {
    const auto p = random_patch(16, PatchLabel::Negative, rng);
    const double prob = predict_patch(m, p);
    EXPECT_GE(prob, 0.0);
    EXPECT_LE(prob, 1.0);
    std::vector<float> planar(16 * 16 * 3);
    const auto probs = m.network.class_probabilities(data::to_tensor<float>(p));
    EXPECT_NEAR(probs[0] + probs[1], 1.0, 1e-6);
    EXPECT_EQ(static_cast<float>(prob), probs[1]);
  }
  auto zero = build_network(16, 5);
  zero.network.parameters().fill(0.0f);
  EXPECT_EQ(predict_patch(zero, random_patch(16, PatchLabel::Negative, rng)), 0.5);
  EXPECT_EQ(code_of([&] { predict_patch(m, random_patch(15, PatchLabel::Negative, rng)); }), ErrorCode::ShapeMismatch);
}

TEST(ModelFile, RoundTripIsBitExact) {
  const auto split = random_split(10, 8, 1);
  TrainConfig cfg;
  cfg.epochs = 2;
  auto m = train(build_network(10, 1), split, cfg);
  m.provenance.dataset_hash = "abc123";
  m.provenance.patch_spec.stride = 3;
  const auto bytes = serialize_model(m);
  const auto loaded = deserialize_model(bytes);
  EXPECT_EQ(serialize_model(loaded), bytes);
  EXPECT_EQ(loaded.network.parameters(), m.network.parameters());
  EXPECT_EQ(loaded.history, m.history);
  EXPECT_EQ(loaded.provenance, m.provenance);
  Rng rng(8);
  for (int i = 0; i < 10; ++i) {
    const auto p = random_patch(10, PatchLabel::Negative, rng);
    EXPECT_EQ(predict_patch(loaded, p), predict_patch(m, p));
  }
  const auto path = std::filesystem::temp_directory_path() / "pathoscope_model_test.pscn";
  save_model(path, m);
  EXPECT_EQ(read_file_bytes(path), bytes);
  EXPECT_EQ(serialize_model(load_model(path)), bytes);
  std::filesystem::remove(path);
}

TEST(ModelFile, CorruptionDetected) {
  const auto bytes = serialize_model(build_network(10, 1));
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    EXPECT_EQ(code_of([&] { deserialize_model(truncated); }), ErrorCode::TruncatedFile) << cut;
  }
  auto flipped = bytes;
  flipped[bytes.size() - 100] ^= 0x40;
  EXPECT_EQ(code_of([&] { deserialize_model(flipped); }), ErrorCode::ChecksumMismatch);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_EQ(code_of([&] { deserialize_model(magic); }), ErrorCode::BadMagic);
  auto version = bytes;
  version[4] = 2;
  EXPECT_EQ(code_of([&] { deserialize_model(version); }), ErrorCode::VersionUnsupported);
}

TEST(ModelFile, LossLogCsv) {
  EXPECT_EQ(loss_log_csv({0.5, 0.25}), "epoch,mean_loss\n1,0.5\n2,0.25\n");
}

TEST(Train, ThroughputAtPatch32) {
  const auto split = random_split(32, 256, 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  const auto t0 = std::chrono::steady_clock::now();
  train(build_network(32, 1), split, cfg);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  std::printf("training: %.3f ms per patch at p=32\n", ms / 256);
}
