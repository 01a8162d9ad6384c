#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "pathoscope/core/binary_io.hpp"
#include "pathoscope/core/error.hpp"
#include "pathoscope/core/rng.hpp"
#include "pathoscope/eval/curves.hpp"
#include "pathoscope/eval/extra_trees.hpp"
#include "pathoscope/eval/report.hpp"
#include "pathoscope/eval/shape_features.hpp"

using namespace pathoscope;
using namespace pathoscope::eval;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvariantViolation;
}

double mann_whitney(const ScoredSet& s) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    if (!s.labels[i]) continue;
    for (std::size_t j = 0; j < s.scores.size(); ++j) {
      if (s.labels[j]) continue;
      pairs += 1;
      wins += s.scores[i] > s.scores[j] ? 1.0 : s.scores[i] == s.scores[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

// Rank of i = items strictly above it plus earlier-indexed equals, plus one.
double stepwise_ap(const ScoredSet& s) {
  const std::size_t n = s.scores.size();
  double total = 0, pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!s.labels[i]) continue;
    pos += 1;
    double rank = 1, hits = 1;
    for (std::size_t j = 0; j < n; ++j) {
      const bool before = s.scores[j] > s.scores[i] || (s.scores[j] == s.scores[i] && j < i);
      if (before) rank += 1, hits += s.labels[j];
    }
    total += hits / rank;
  }
  return total / pos;
}

ScoredSet random_set(Rng& rng, std::size_t n, int levels) {
  ScoredSet s;
  for (std::size_t i = 0; i < n; ++i) {
    s.labels.push_back(static_cast<std::uint8_t>(uniform01(rng) < 0.3));
    s.scores.push_back(levels > 0 ? static_cast<double>(uniform_int(rng, 0, levels)) : uniform01(rng));
  }
  s.labels[0] = 1;
  s.labels[1] = 0;
  return s;
}

data::Patch patch_from(int size, const std::function<double(int, int)>& gray) {
  data::Patch p;
  p.size = size;
  p.pixels.resize(static_cast<std::size_t>(size) * size * 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) p.pixels[(static_cast<std::size_t>(y) * size + x) * 3 + c] = static_cast<float>(gray(x, y));
  return p;
}

data::Patch rotate90(const data::Patch& p) {
  data::Patch r = p;
  const int s = p.size;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x)
      for (int c = 0; c < 3; ++c) r.pixels[(static_cast<std::size_t>(s - 1 - x) * s + y) * 3 + c] = p.at(x, y, c);
  return r;
}

}  // namespace

TEST(Roc, SpecExamples) {
  EXPECT_EQ(roc_curve({{0.9, 0.8, 0.3}, {1, 1, 0}}).auc, 1.0);
  EXPECT_EQ(roc_curve({{0.9, 0.8, 0.3, 0.1}, {1, 0, 1, 0}}).auc, 0.75);
  EXPECT_EQ(roc_curve({{0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0}}).auc, 0.5);
}

TEST(Roc, PointsStartAtOriginEndAtOneAndAreMonotone) {
  Rng rng(3);
  const auto s = random_set(rng, 300, 20);
  const auto c = roc_curve(s);
  EXPECT_EQ(c.points.front().fpr, 0.0);
  EXPECT_TRUE(std::isinf(c.points.front().threshold));
  EXPECT_EQ(c.points.back().fpr, 1.0);
  EXPECT_EQ(c.points.back().tpr, 1.0);
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    EXPECT_GE(c.points[i].fpr, c.points[i - 1].fpr);
    EXPECT_GE(c.points[i].tpr, c.points[i - 1].tpr);
    EXPECT_LT(c.points[i].threshold, c.points[i - 1].threshold);
  }
}

TEST(Roc, EqualsMannWhitney) {
  Rng rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const auto s = random_set(rng, static_cast<std::size_t>(uniform_int(rng, 2, 600)), trial % 3 == 0 ? 0 : 7);
    EXPECT_NEAR(roc_curve(s).auc, mann_whitney(s), 1e-9);
  }
}

TEST(Roc, InvariantUnderMonotoneTransformAndPermutation) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = random_set(rng, 200, trial % 2 ? 10 : 0);
    const double auc = roc_curve(s).auc;
    ScoredSet t = s;
    for (auto& v : t.scores) v = std::exp(3 * v) - 7;
    EXPECT_EQ(roc_curve(t).auc, auc);
    std::vector<std::size_t> perm(s.scores.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    shuffle(perm.begin(), perm.end(), rng);
    ScoredSet p;
    for (auto i : perm) p.scores.push_back(s.scores[i]), p.labels.push_back(s.labels[i]);
    EXPECT_EQ(roc_curve(p).auc, auc);
  }
}

TEST(Roc, SingleClassRejected) {
  EXPECT_EQ(code_of([] { roc_curve({{0.1, 0.2}, {1, 1}}); }), ErrorCode::SingleClass);
  EXPECT_EQ(code_of([] { roc_curve({{0.1, 0.2}, {0}}); }), ErrorCode::LengthMismatch);
}

TEST(Pr, SpecExamples) {
  EXPECT_NEAR(pr_curve({{0.9, 0.5, 0.1}, {1, 0, 1}}).ap, 5.0 / 6.0, 1e-15);
  EXPECT_EQ(pr_curve({{0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}}).ap, 1.0);
  EXPECT_NEAR(pr_curve({{0.9, 0.8, 0.7, 0.6, 0.1}, {0, 0, 0, 0, 1}}).ap, 1.0 / 5.0, 1e-15);
  EXPECT_EQ(code_of([] { pr_curve({{0.1, 0.2}, {0, 0}}); }), ErrorCode::NoPositives);
}

TEST(Pr, TiesKeepInputOrder) {
  EXPECT_EQ(pr_curve({{0.5, 0.5}, {1, 0}}).ap, 1.0);
  EXPECT_EQ(pr_curve({{0.5, 0.5}, {0, 1}}).ap, 0.5);
}

TEST(Pr, EqualsPairwiseRankOracle) {
  Rng rng(8);
  for (int trial = 0; trial < 60; ++trial) {
    const auto s = random_set(rng, static_cast<std::size_t>(uniform_int(rng, 2, 600)), trial % 3 == 0 ? 0 : 5);
    const auto c = pr_curve(s);
    EXPECT_NEAR(c.ap, stepwise_ap(s), 1e-12);
    EXPECT_EQ(c.points.size(), s.scores.size());
    EXPECT_EQ(c.points.back().recall, 1.0);
  }
}

TEST(Pr, PermutationInvariantWithoutTies) {
  Rng rng(9);
  auto s = random_set(rng, 300, 0);
  const double ap = pr_curve(s).ap;
  std::reverse(s.scores.begin(), s.scores.end());
  std::reverse(s.labels.begin(), s.labels.end());
  EXPECT_NEAR(pr_curve(s).ap, ap, 1e-15);
}

TEST(ShapeFeatures, UniformPatchGivesZeros) {
  const auto f = shape_features(patch_from(16, [](int, int) { return 0.7; }));
  for (double v : f) EXPECT_EQ(v, 0.0);
}

TEST(ShapeFeatures, SquareMaskHandValues) {
  // dark 4x4 square at (2,2) on a bright 8x8 patch.
  const auto p = patch_from(8, [](int x, int y) { return x >= 2 && x < 6 && y >= 2 && y < 6 ? 0.2 : 0.9; });
  const auto mask = otsu_mask(p);
  EXPECT_EQ(std::count(mask.begin(), mask.end(), 1), 16);
  const auto f = shape_features(p);
  EXPECT_DOUBLE_EQ(f[0], 16.0 / 64.0);
  EXPECT_DOUBLE_EQ(f[1], 16.0 / 8.0);
  EXPECT_DOUBLE_EQ(f[2], 4 * M_PI * 16 / 256.0);
  EXPECT_NEAR(f[3], 0.0, 1e-12);
  EXPECT_NEAR(f[4], 0.0, 1e-12);
  EXPECT_FLOAT_EQ(static_cast<float>(f[5]), 0.2f);
  EXPECT_NEAR(f[8], 0.0, 1e-6);
  // Hu1 of a 4x4 block: mu20 = mu02 = 4 * 4 * 1.25 = 20; eta = 20 / 16^2.
  EXPECT_NEAR(f[11], 2 * 20.0 / 256.0, 1e-12);
  EXPECT_NEAR(f[12], 0.0, 1e-15);
}

TEST(ShapeFeatures, DiskLessEccentricThanBar) {
  const auto disk = patch_from(32, [](int x, int y) { return std::hypot(x - 15.5, y - 15.5) < 8 ? 0.2 : 0.9; });
  const auto bar = patch_from(32, [](int x, int y) { return std::abs(x - 15.5) < 12 && std::abs(y - 15.5) < 2 ? 0.2 : 0.9; });
  EXPECT_LT(shape_features(disk)[3], shape_features(bar)[3]);
  EXPECT_LT(shape_features(disk)[3], 0.2);
  EXPECT_GT(shape_features(bar)[3], 0.9);
}

TEST(ShapeFeatures, RotationInvariantComponents) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const double cx = uniform(rng, 8, 24), cy = uniform(rng, 8, 24), a = uniform(rng, 3, 8), b = uniform(rng, 2, 5);
    auto p = patch_from(32, [&](int x, int y) {
      const double u = (x - cx) / a, v = (y - cy) / b;
      return u * u + v * v < 1 ? 0.25 : 0.85;
    });
    for (auto& v : p.pixels) v = std::clamp(v + static_cast<float>(0.03 * normal01(rng)), 0.0f, 1.0f);
    const auto f = shape_features(p);
    const auto g = shape_features(rotate90(p));
    for (std::size_t i : {0u, 1u, 2u, 3u, 4u, 11u, 12u, 13u}) EXPECT_NEAR(g[i], f[i], 1e-9 * std::max(1.0, std::abs(f[i]))) << i;
  }
}

TEST(ExtraTrees, SeparableToySetFitsPerfectly) {
  Rng rng(1);
  std::vector<std::vector<double>> x;
  std::vector<std::uint8_t> y;
  for (int i = 0; i < 200; ++i) {
    const double a = uniform(rng, -1, 1), b = uniform(rng, -1, 1);
    if (std::abs(a + 0.5 * b) < 0.05) continue;
    x.push_back({a, b});
    y.push_back(a + 0.5 * b > 0);
  }
  ExtraTreesConfig cfg;
  cfg.seed = 4;
  const auto forest = extra_trees_train(x, y, cfg);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = extra_trees_predict(forest, x[i]);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    EXPECT_EQ(s > 0.5, y[i] == 1) << i;
  }
  EXPECT_EQ(extra_trees_train(x, y, cfg), forest);
  cfg.seed = 5;
  EXPECT_FALSE(extra_trees_train(x, y, cfg) == forest);
}

TEST(ExtraTrees, LargeNMinGivesSingleLeafWithGlobalFraction) {
  std::vector<std::vector<double>> x{{0}, {1}, {2}, {3}, {4}, {5}, {6}};
  std::vector<std::uint8_t> y{0, 1, 0, 0, 1, 0, 0};
  ExtraTreesConfig cfg;
  cfg.n_min_leaf = 7;
  cfg.n_trees = 1;
  const auto forest = extra_trees_train(x, y, cfg);
  ASSERT_EQ(forest.trees[0].nodes.size(), 1u);
  for (const auto& row : x) EXPECT_EQ(extra_trees_predict(forest, row), 2.0 / 7.0);
}

TEST(ExtraTrees, Errors) {
  EXPECT_EQ(code_of([] { extra_trees_train({}, {}, {}); }), ErrorCode::EmptyTraining);
  EXPECT_EQ(code_of([] { extra_trees_train({{1}, {2}}, {1, 1}, {}); }), ErrorCode::SingleClass);
}

TEST(Report, IdenticalSetsIdenticalMetricsAndRoundTrip) {
  Rng rng(10);
  const auto s = random_set(rng, 400, 0);
  const auto reports = compare_methods(s, s);
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_EQ(reports[0].report.roc.auc, reports[1].report.roc.auc);
  EXPECT_EQ(reports[0].report.pr.ap, reports[1].report.pr.ap);
  EXPECT_EQ(reports[1].method, "extra-trees/shape-features-v1");

  EXPECT_EQ(parse_roc_csv(roc_csv(reports[0].report.roc)), reports[0].report.roc.points);
  EXPECT_EQ(parse_pr_csv(pr_csv(reports[0].report.pr)), reports[0].report.pr.points);
  const auto rows = parse_summary_csv(summary_csv(reports));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].auc, reports[0].report.roc.auc);
  EXPECT_EQ(rows[0].ap, reports[0].report.pr.ap);
  EXPECT_EQ(rows[0].n, 400u);
  EXPECT_EQ(rows[1].method, reports[1].method);

  const auto dir = std::filesystem::temp_directory_path() / "pathoscope_eval_test";
  std::filesystem::remove_all(dir);
  write_reports(dir, reports);
  EXPECT_TRUE(std::filesystem::exists(dir / "cnn" / "roc.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "extra-trees" / "pr.csv"));
  const auto bytes = read_file_bytes(dir / "summary.csv");
  EXPECT_EQ(std::string(bytes.begin(), bytes.end()), summary_csv(reports));
  std::filesystem::remove_all(dir);
}

TEST(Report, MismatchedSetsRejected) {
  const ScoredSet a{{0.1, 0.9}, {0, 1}};
  const ScoredSet b{{0.1}, {0}};
  EXPECT_EQ(code_of([&] { compare_methods(a, b); }), ErrorCode::LengthMismatch);
}
