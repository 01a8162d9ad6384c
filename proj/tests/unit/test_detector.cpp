#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "pathoscope/core/error.hpp"
#include "pathoscope/core/rng.hpp"
#include "pathoscope/detect/detector.hpp"

using namespace pathoscope;
using namespace pathoscope::detect;
using data::BoundingBox;

namespace {

Candidate cand(int x, int y, int size, double p) { return {BoundingBox{x, y, x + size, y + size, {}}, p}; }

double ref_iou(const BoundingBox& a, const BoundingBox& b) {
  long long inter = 0;
  for (int y = std::max(a.y_min, b.y_min); y < std::min(a.y_max, b.y_max); ++y)
    for (int x = std::max(a.x_min, b.x_min); x < std::min(a.x_max, b.x_max); ++x) ++inter;
  return static_cast<double>(inter) / static_cast<double>(a.area() + b.area() - inter);
}

// Re-scan every round for the best survivor, then drop what it covers.
std::vector<Candidate> reference_nms(std::vector<Candidate> c, double thr) {
  std::vector<std::size_t> idx(c.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<Candidate> out;
  while (!idx.empty()) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < idx.size(); ++k) {
      const auto& a = c[idx[k]];
      const auto& b = c[idx[best]];
      const bool better = a.probability > b.probability ||
                          (a.probability == b.probability &&
                           (a.box.y_min < b.box.y_min || (a.box.y_min == b.box.y_min && a.box.x_min < b.box.x_min)));
      if (better) best = k;
    }
    const Candidate keep = c[idx[best]];
    out.push_back(keep);
    std::vector<std::size_t> rest;
    for (std::size_t k = 0; k < idx.size(); ++k)
      if (k != best && ref_iou(keep.box, c[idx[k]].box) <= thr) rest.push_back(idx[k]);
    idx = rest;
  }
  return out;
}

std::vector<Candidate> random_candidates(Rng& rng, std::size_t n, bool ties) {
  std::vector<Candidate> c;
  for (std::size_t i = 0; i < n; ++i) {
    const int w = static_cast<int>(uniform_int(rng, 4, 40)), h = static_cast<int>(uniform_int(rng, 4, 40));
    const int x = static_cast<int>(uniform_int(rng, 0, 200)), y = static_cast<int>(uniform_int(rng, 0, 200));
    const double p = ties ? static_cast<double>(uniform_int(rng, 0, 5)) / 5.0 : uniform01(rng);
    c.push_back({BoundingBox{x, y, x + w, y + h, {}}, p});
  }
  return c;
}

model::TrainedModel constant_model(int p, int factor) {
  auto m = model::build_network(p, 1);
  m.network.parameters().fill(0.0f);
  m.provenance.patch_spec.downsample_factor = factor;
  m.provenance.patch_spec.patch_size = p;
  return m;
}

data::AnnotatedImage noise_image(int w, int h, std::uint64_t seed) {
  data::AnnotatedImage img{"img", data::Image(w, h), {}};
  Rng rng(seed);
  for (auto& v : img.pixels.pixels()) v = static_cast<float>(uniform_int(rng, 0, 255));
  return img;
}

}  // namespace

TEST(WindowCount, SpecExamples) {
  EXPECT_EQ(window_count(64, 64, 32, 8), 25u);
  EXPECT_EQ(window_count(32, 32, 32, 8), 1u);
  EXPECT_EQ(window_count(31, 64, 32, 1), 0u);
}

TEST(ScoreImage, CountMatchesClosedFormAcrossSizes) {
  Rng rng(4);
  DetectorConfig cfg;
  cfg.probability_threshold = 0.5;
  const auto m = constant_model(8, 1);  // every window scores exactly 0.5
  for (int trial = 0; trial < 60; ++trial) {
    const int w = static_cast<int>(uniform_int(rng, 8, 40)), h = static_cast<int>(uniform_int(rng, 8, 40));
    cfg.stride = static_cast<int>(uniform_int(rng, 1, 9));
    const auto c = score_image(m, noise_image(w, h, trial), cfg);
    const auto expected = static_cast<std::size_t>(std::ceil((w - 8 + 1) / static_cast<double>(cfg.stride))) *
                          static_cast<std::size_t>(std::ceil((h - 8 + 1) / static_cast<double>(cfg.stride)));
    EXPECT_EQ(c.size(), expected) << w << "x" << h << " stride " << cfg.stride;
    EXPECT_EQ(window_count(w, h, 8, cfg.stride), expected);
    for (const auto& k : c) {
      EXPECT_TRUE(k.box.within(w, h));
      EXPECT_EQ(k.box.width(), 8);
      EXPECT_EQ(k.probability, 0.5);
    }
  }
}

TEST(ScoreImage, ThresholdOneGivesNothingAndTooSmallThrows) {
  const auto m = model::build_network(16, 2);
  DetectorConfig cfg;
  cfg.probability_threshold = 1.0;
  EXPECT_TRUE(score_image(m, noise_image(40, 40, 1), cfg).empty());
  try {
    score_image(m, noise_image(15, 40, 1), DetectorConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ImageTooSmall);
  }
}

TEST(ScoreImage, ThreadedEqualsSerial) {
  const auto m = model::build_network(16, 3);
  DetectorConfig cfg;
  cfg.stride = 3;
  cfg.probability_threshold = 0.01;
  const auto img = noise_image(50, 45, 6);
  const auto serial = score_image(m, img, cfg);
  cfg.threads = 4;
  EXPECT_EQ(score_image(m, img, cfg), serial);
}

TEST(ScoreImage, WindowProbabilityEqualsPatchPrediction) {
  const auto m = model::build_network(16, 3);
  DetectorConfig cfg;
  cfg.stride = 5;
  cfg.probability_threshold = 1e-9;
  const auto img = noise_image(40, 30, 2);
  for (const auto& c : score_image(m, img, cfg)) {
    const auto patch = data::crop_patch(img, c.box.x_min, c.box.y_min, 16, data::PatchLabel::Negative);
    EXPECT_EQ(c.probability, model::predict_patch(m, patch));
  }
}

TEST(Nms, SpecExample) {
  // 12x10 boxes offset by 4: IoU = 80 / (240 - 80) = 0.5.
  const Candidate a{BoundingBox{0, 0, 12, 10, {}}, 0.9};
  const Candidate b{BoundingBox{4, 0, 16, 10, {}}, 0.8};
  const Candidate c{BoundingBox{50, 50, 60, 60, {}}, 0.7};
  ASSERT_DOUBLE_EQ(data::iou(a.box, b.box), 0.5);
  EXPECT_EQ(non_max_suppression({b, c, a}, 0.3), (std::vector<Detection>{a, c}));
}

TEST(Nms, DisjointInputComesBackSortedByProbability) {
  std::vector<Candidate> in{cand(0, 0, 5, 0.2), cand(10, 0, 5, 0.9), cand(20, 0, 5, 0.5)};
  EXPECT_EQ(non_max_suppression(in, 0.3), (std::vector<Detection>{in[1], in[2], in[0]}));
}

TEST(Nms, TiesBrokenByYThenX) {
  std::vector<Candidate> in{cand(4, 4, 10, 0.5), cand(2, 4, 10, 0.5), cand(9, 0, 10, 0.5)};
  const auto out = non_max_suppression(in, 0.1);
  ASSERT_FALSE(out.empty());
  EXPECT_EQ(out[0], in[2]);
}

TEST(Nms, MatchesQuadraticReference) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(uniform_int(rng, 0, 200));
    const double thr = uniform(rng, 0.05, 0.9);
    const auto c = random_candidates(rng, n, trial % 2 == 0);
    EXPECT_EQ(non_max_suppression(c, thr), reference_nms(c, thr)) << trial;
  }
}

TEST(Nms, Properties) {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const double thr = uniform(rng, 0.05, 0.9);
    const auto c = random_candidates(rng, 150, trial % 3 == 0);
    const auto out = non_max_suppression(c, thr);
    for (const auto& d : out) EXPECT_NE(std::find(c.begin(), c.end(), d), c.end());
    for (std::size_t i = 0; i < out.size(); ++i)
      for (std::size_t j = i + 1; j < out.size(); ++j) EXPECT_LE(ref_iou(out[i].box, out[j].box), thr);
    for (const auto& k : c) {
      if (std::find(out.begin(), out.end(), k) != out.end()) continue;
      const bool witnessed = std::any_of(out.begin(), out.end(), [&](const Detection& d) {
        return ref_iou(d.box, k.box) > thr && d.probability >= k.probability;
      });
      EXPECT_TRUE(witnessed);
    }
    EXPECT_EQ(non_max_suppression(out, thr), out);
  }
}

TEST(Detect, CoordinatesAreInOriginalSpace) {
  const auto small = noise_image(48, 40, 3);
  data::AnnotatedImage big{"img", data::Image(96, 80), {}};
  for (int y = 0; y < 80; ++y)
    for (int x = 0; x < 96; ++x)
      for (int c = 0; c < 3; ++c) big.pixels.at(x, y, c) = small.pixels.at(x / 2, y / 2, c);
  auto m1 = model::build_network(16, 8);
  m1.provenance.patch_spec.downsample_factor = 1;
  auto m2 = m1;
  m2.provenance.patch_spec.downsample_factor = 2;
  DetectorConfig cfg;
  cfg.stride = 4;
  cfg.probability_threshold = 0.01;
  const auto d1 = detect::detect(m1, small, cfg);
  const auto d2 = detect::detect(m2, big, cfg);
  ASSERT_FALSE(d1.empty());
  ASSERT_EQ(d1.size(), d2.size());
  for (std::size_t i = 0; i < d1.size(); ++i) {
    EXPECT_EQ(d2[i].box.x_min, 2 * d1[i].box.x_min);
    EXPECT_EQ(d2[i].box.y_max, 2 * d1[i].box.y_max);
    EXPECT_EQ(d2[i].box.width(), 32);
    EXPECT_TRUE(d2[i].box.within(96, 80));
    EXPECT_EQ(d2[i].probability, d1[i].probability);
  }
}

TEST(Match, SpecExamples) {
  const BoundingBox t{10, 10, 30, 30, {}};
  auto r = match_detections({{t, 0.9}}, {t});
  EXPECT_EQ(r.true_positives, 1u);
  EXPECT_EQ(r.false_positives, 0u);
  EXPECT_EQ(r.false_negatives, 0u);

  r = match_detections({}, {t, BoundingBox{50, 50, 60, 60, {}}});
  EXPECT_EQ(r.false_negatives, 2u);

  r = match_detections({{t, 0.9}, {BoundingBox{12, 12, 32, 32, {}}, 0.8}}, {t});
  EXPECT_EQ(r.true_positives, 1u);
  EXPECT_EQ(r.false_positives, 1u);
  EXPECT_EQ(r.pairs, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}}));
}

TEST(Match, CentreInsideCountsEvenAtLowIou) {
  const BoundingBox truth{40, 40, 50, 50, {}};
  const BoundingBox det{13, 13, 77, 77, {}};  // centre (45,45), IoU 100/4096
  EXPECT_EQ(match_detections({{det, 0.7}}, {truth}).true_positives, 1u);
  const BoundingBox off{46, 46, 110, 110, {}};  // centre outside, IoU small
  EXPECT_EQ(match_detections({{off, 0.7}}, {truth}).false_positives, 1u);
}

TEST(Match, HigherProbabilityClaimsFirst) {
  const BoundingBox truth{0, 0, 10, 10, {}};
  const auto r = match_detections({{BoundingBox{1, 1, 11, 11, {}}, 0.4}, {BoundingBox{2, 2, 12, 12, {}}, 0.8}}, {truth});
  EXPECT_EQ(r.pairs, (std::vector<std::pair<std::size_t, std::size_t>>{{1, 0}}));
}

TEST(Export, JsonLinesAndOverlay) {
  const std::vector<Detection> d{{BoundingBox{2, 3, 6, 7, {}}, 0.75}};
  const auto text = detection_jsonl("img-1", d);
  ASSERT_EQ(text.back(), '\n');
  const auto j = nlohmann::json::parse(text);
  EXPECT_EQ(j["image_id"], "img-1");
  EXPECT_EQ(j["bbox"], nlohmann::json({2, 3, 6, 7}));
  EXPECT_EQ(j["probability"], 0.75);

  const data::Image base(10, 10, 100.0f);
  const auto out = render_overlay(base, {BoundingBox{0, 0, 4, 4, {}}}, d, 1);
  EXPECT_EQ(out.at(0, 0, 1), 255.0f);  // white truth edge
  EXPECT_EQ(out.at(2, 3, 0), 255.0f);  // red detection edge
  EXPECT_EQ(out.at(2, 3, 1), 0.0f);
  EXPECT_EQ(out.at(4, 5, 0), 100.0f);  // detection interior untouched
  EXPECT_EQ(out.at(9, 9, 2), 100.0f);
}

TEST(DetectorConfig, Validation) {
  DetectorConfig c;
  c.stride = 0;
  EXPECT_THROW(c.validate(), Error);
  c = DetectorConfig{};
  c.overlap_threshold = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = DetectorConfig{};
  c.probability_threshold = 0.0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(default_stride(32), 8);
  EXPECT_EQ(default_stride(2), 1);
}
