#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "pathoscope/core/rng.hpp"
#include "pathoscope/data/patch_cache.hpp"
#include "pathoscope/data/patchset.hpp"

using namespace pathoscope;
using namespace pathoscope::data;

namespace {

AnnotatedImage blank(const std::string& id, int w, int h, std::vector<BoundingBox> boxes = {}) {
  return {id, Image(w, h, 200.0f), std::move(boxes)};
}

AnnotatedImage noisy(const std::string& id, int w, int h, std::uint64_t seed, std::vector<BoundingBox> boxes = {}) {
  AnnotatedImage img{id, Image(w, h), std::move(boxes)};
  Rng rng(seed);
  for (auto& v : img.pixels.pixels()) v = static_cast<float>(uniform_int(rng, 0, 255));
  return img;
}

PatchSpec spec32() {
  PatchSpec s;
  s.downsample_factor = 1;
  s.patch_size = 32;
  s.stride = 8;
  s.target_label = "obj";
  return s;
}

// Brute force: mark every annotated pixel, then scan each window.
bool window_touches_any_box(const AnnotatedImage& img, const Patch& p) {
  std::vector<char> mask(static_cast<std::size_t>(img.pixels.width()) * img.pixels.height(), 0);
  for (const auto& b : img.boxes)
    for (int y = b.y_min; y < b.y_max; ++y)
      for (int x = b.x_min; x < b.x_max; ++x) mask[static_cast<std::size_t>(y) * img.pixels.width() + x] = 1;
  for (int y = p.origin_y; y < p.origin_y + p.size; ++y)
    for (int x = p.origin_x; x < p.origin_x + p.size; ++x)
      if (mask[static_cast<std::size_t>(y) * img.pixels.width() + x]) return true;
  return false;
}

std::vector<Patch> dummy_patches(std::size_t n, PatchLabel label) {
  std::vector<Patch> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i].size = 2;
    v[i].pixels.assign(12, static_cast<float>(i) / 1e4f);
    v[i].label = label;
    v[i].origin_x = static_cast<int>(i);
  }
  return v;
}

}  // namespace

TEST(BoundingBox, IntersectionAndIou) {
  BoundingBox a{0, 0, 10, 10, "x"}, b{5, 5, 15, 15, "x"}, c{10, 0, 20, 10, "x"};
  EXPECT_EQ(intersection_area(a, b), 25);
  EXPECT_NEAR(iou(a, b), 25.0 / 175.0, 1e-15);
  EXPECT_FALSE(intersects(a, c));  // touching edges share no pixel
  EXPECT_TRUE(a.within(10, 10));
  EXPECT_FALSE(a.within(9, 10));
}

TEST(Downsample, FactorOneIsIdentity) {
  auto img = noisy("a", 40, 30, 1, {{3, 4, 20, 25, "obj"}});
  const auto d = downsample(img, 1);
  EXPECT_EQ(d.pixels, img.pixels);
  EXPECT_EQ(d.boxes, img.boxes);
}

TEST(Downsample, CheckerboardAveragesToHalf) {
  AnnotatedImage img{"c", Image(4, 4), {}};
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c) img.pixels.at(x, y, c) = ((x + y) % 2) ? 255.0f : 0.0f;
  const auto d = downsample(img, 2);
  ASSERT_EQ(d.pixels.width(), 2);
  for (float v : d.pixels.pixels()) EXPECT_FLOAT_EQ(v, 127.5f);
}

TEST(Downsample, BoxesRescaleWithCoverage) {
  auto img = blank("b", 64, 64, {{10, 10, 20, 20, "obj"}, {3, 5, 8, 9, "obj"}});
  const auto d = downsample(img, 2);
  EXPECT_EQ(d.boxes[0], (BoundingBox{5, 5, 10, 10, "obj"}));
  EXPECT_EQ(d.boxes[1], (BoundingBox{1, 2, 4, 5, "obj"}));  // floor / ceil
}

TEST(Downsample, TooLargeFactor) {
  PatchSpec s = spec32();
  s.downsample_factor = 4;
  try {
    downsample(blank("t", 100, 100), s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FactorTooLarge);
  }
}

TEST(PositivePatches, CenteredOnBox) {
  auto img = blank("p", 100, 100, {{45, 45, 55, 55, "obj"}});
  const auto r = extract_positive_patches(img, spec32());
  ASSERT_EQ(r.patches.size(), 1u);
  EXPECT_EQ(r.patches[0].origin_x, 50 - 16);
  EXPECT_EQ(r.patches[0].origin_y, 50 - 16);
  EXPECT_EQ(r.patches[0].label, PatchLabel::Positive);
  for (float v : r.patches[0].pixels) EXPECT_FLOAT_EQ(v, 200.0f / 255.0f);
}

TEST(PositivePatches, BorderBoxSkipped) {
  auto img = blank("p", 100, 100, {{0, 48, 4, 52, "obj"}});
  const auto r = extract_positive_patches(img, spec32());
  EXPECT_TRUE(r.patches.empty());
  EXPECT_EQ(r.skipped, 1u);
}

TEST(PositivePatches, DistinctBoxesAndLabelFilter) {
  auto img = blank("p", 200, 200,
                   {{20, 20, 30, 30, "obj"}, {100, 40, 110, 50, "obj"}, {60, 150, 70, 160, "obj"}, {80, 80, 90, 90, "other"}});
  const auto r = extract_positive_patches(img, spec32());
  ASSERT_EQ(r.patches.size(), 3u);
  std::set<std::pair<int, int>> origins;
  for (const auto& p : r.patches) origins.insert({p.origin_x, p.origin_y});
  EXPECT_EQ(origins.size(), 3u);
}

TEST(NegativePatches, NoBoxesAnywhere) {
  const auto v = sample_negative_patches(blank("n", 64, 64), spec32(), 5, 9);
  EXPECT_EQ(v.size(), 5u);
  for (const auto& p : v) EXPECT_EQ(p.label, PatchLabel::Negative);
}

TEST(NegativePatches, SaturatedImageExhausts) {
  try {
    sample_negative_patches(blank("n", 64, 64, {{0, 0, 64, 64, "obj"}}), spec32(), 3, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SamplingExhausted);
  }
  EXPECT_TRUE(sample_negative_patches(blank("n", 64, 64, {{0, 0, 64, 64, "obj"}}), spec32(), 0, 1).empty());
}

TEST(NegativePatches, NeverTouchAnyBoxBruteForce) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<BoundingBox> boxes;
    for (int b = 0; b < 6; ++b) {
      const int x = static_cast<int>(uniform_int(rng, 0, 150)), y = static_cast<int>(uniform_int(rng, 0, 150));
      boxes.push_back({x, y, x + static_cast<int>(uniform_int(rng, 1, 40)), y + static_cast<int>(uniform_int(rng, 1, 40)),
                       b % 2 ? "obj" : "other"});
    }
    auto img = blank("n" + std::to_string(trial), 200, 200, boxes);
    for (const auto& p : sample_negative_patches(img, spec32(), 20, rng())) EXPECT_FALSE(window_touches_any_box(img, p));
  }
}

TEST(NegativePatches, DeterministicInSeed) {
  auto img = noisy("d", 120, 120, 3, {{40, 40, 60, 60, "obj"}});
  EXPECT_EQ(sample_negative_patches(img, spec32(), 10, 5), sample_negative_patches(img, spec32(), 10, 5));
}

TEST(Balance, CapsAtHundredTimesPositives) {
  EXPECT_EQ(balance(dummy_patches(10, PatchLabel::Positive), dummy_patches(1500, PatchLabel::Negative), 100, 1).size(), 1000u);
  EXPECT_EQ(balance(dummy_patches(5, PatchLabel::Positive), dummy_patches(200, PatchLabel::Negative), 100, 1).size(), 200u);
  try {
    balance({}, dummy_patches(3, PatchLabel::Negative), 100, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoPositives);
  }
}

TEST(Balance, SubsampleWithoutReplacementProperty) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto npos = static_cast<std::size_t>(uniform_int(rng, 1, 5));
    const auto nneg = static_cast<std::size_t>(uniform_int(rng, 0, 800));
    const int cap = static_cast<int>(uniform_int(rng, 1, 120));
    const auto kept = balance(dummy_patches(npos, PatchLabel::Positive), dummy_patches(nneg, PatchLabel::Negative), cap, rng());
    EXPECT_LE(kept.size(), static_cast<std::size_t>(cap) * npos);
    EXPECT_EQ(kept.size(), std::min(nneg, static_cast<std::size_t>(cap) * npos));
    std::set<int> seen;
    for (const auto& p : kept) EXPECT_TRUE(seen.insert(p.origin_x).second);
    EXPECT_TRUE(std::is_sorted(kept.begin(), kept.end(), [](auto& a, auto& b) { return a.origin_x < b.origin_x; }));
  }
}

TEST(Augment, EightDistinctTransformsOfTwoByTwo) {
  Patch p;
  p.size = 2;
  for (float v : {1.f, 2.f, 3.f, 4.f})
    for (int c = 0; c < 3; ++c) p.pixels.push_back(v / 10.0f);
  const auto out = augment(p);
  ASSERT_EQ(out.size(), 8u);
  EXPECT_EQ(out[0], p);
  // By hand, as (top-left, top-right, bottom-left, bottom-right) of the first channel:
  const std::vector<std::array<float, 4>> expected = {
      {1, 2, 3, 4}, {2, 4, 1, 3}, {4, 3, 2, 1}, {3, 1, 4, 2},  // rotations 0/90/180/270 ccw
      {2, 1, 4, 3}, {1, 3, 2, 4}, {3, 4, 1, 2}, {4, 2, 3, 1},  // horizontal flip, then the same rotations
  };
  std::set<std::vector<float>> distinct;
  for (int t = 0; t < 8; ++t) {
    EXPECT_EQ(out[t].transform_id, t);
    EXPECT_EQ(out[t].augmented, t != 0);
    for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(out[t].pixels[i * 3] * 10.0f, expected[t][i]) << "transform " << t;
    distinct.insert(out[t].pixels);
  }
  EXPECT_EQ(distinct.size(), 8u);
}

TEST(Augment, ConstantPatchStillGivesEight) {
  Patch p;
  p.size = 5;
  p.pixels.assign(75, 0.5f);
  const auto out = augment(p);
  ASSERT_EQ(out.size(), 8u);
  for (const auto& a : out) EXPECT_EQ(a.pixels, p.pixels);
}

TEST(Augment, RejectsNonSquare) {
  Patch p;
  p.size = 3;
  p.pixels.assign(10, 0.0f);
  EXPECT_THROW(augment(p), Error);
}

TEST(Augment, IdentityIsIdempotentProperty) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Patch p;
    p.size = static_cast<int>(uniform_int(rng, 1, 9));
    for (int i = 0; i < p.size * p.size * 3; ++i) p.pixels.push_back(static_cast<float>(uniform01(rng)));
    EXPECT_EQ(augment(augment(p)[0])[0], p);
    // Each transform is a pixel permutation.
    for (const auto& a : augment(p)) {
      auto x = a.pixels, y = p.pixels;
      std::sort(x.begin(), x.end());
      std::sort(y.begin(), y.end());
      EXPECT_EQ(x, y);
    }
  }
}

namespace {

std::vector<AnnotatedImage> small_corpus(int n, int boxes_per_image, std::uint64_t seed) {
  std::vector<AnnotatedImage> corpus;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    std::vector<BoundingBox> boxes;
    for (int b = 0; b < boxes_per_image; ++b) {
      const int x = 20 + 40 * b, y = static_cast<int>(uniform_int(rng, 20, 90));
      boxes.push_back({x, y, x + 8, y + 8, "obj"});
    }
    corpus.push_back(noisy("img" + std::to_string(i), 128, 128, rng(), boxes));
  }
  return corpus;
}

BuildConfig small_config(SplitMode mode, std::size_t negatives) {
  BuildConfig c;
  c.spec = spec32();
  c.spec.patch_size = 16;
  c.negatives_per_image = negatives;
  c.mode = mode;
  c.seed = 99;
  return c;
}

}  // namespace

TEST(Split, TenImagesSplitFiveFiveDisjoint) {
  const auto corpus = small_corpus(10, 2, 1);
  const auto s = split_50_50(corpus, small_config(SplitMode::ByImage, 10));
  EXPECT_EQ(s.train_image_ids.size(), 5u);
  EXPECT_EQ(s.test_image_ids.size(), 5u);
  std::set<std::string> train(s.train_image_ids.begin(), s.train_image_ids.end());
  for (const auto& id : s.test_image_ids) EXPECT_EQ(train.count(id), 0u);
  for (const auto& p : s.train) EXPECT_EQ(train.count(p.source_image_id), 1u);
  for (const auto& p : s.test) EXPECT_EQ(train.count(p.source_image_id), 0u);
  EXPECT_FALSE(s.train.empty());
  EXPECT_FALSE(s.test.empty());
}

TEST(Split, SameSeedSameSplit) {
  const auto corpus = small_corpus(6, 2, 2);
  const auto a = split_50_50(corpus, small_config(SplitMode::ByImage, 10));
  const auto b = split_50_50(corpus, small_config(SplitMode::ByImage, 10));
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.train_image_ids, b.train_image_ids);
}

TEST(Split, CorpusTooSmall) {
  try {
    split_50_50(small_corpus(1, 1, 3), small_config(SplitMode::ByImage, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorpusTooSmall);
  }
}

TEST(Split, PositiveFractionAtLeastCapBound) {
  // Every image has a box and negatives exceed the cap: positives are 8 per
  // original, negatives at most 100 per original.
  const auto corpus = small_corpus(4, 1, 4);
  auto cfg = small_config(SplitMode::ByImage, 300);
  const auto s = split_50_50(corpus, cfg);
  for (const auto* part : {&s.train, &s.test}) {
    const auto pos = std::count_if(part->begin(), part->end(), [](auto& p) { return p.label == PatchLabel::Positive; });
    const auto neg = static_cast<long>(part->size()) - pos;
    EXPECT_GE(pos * 108, 8 * (pos + neg));
    EXPECT_LE(neg, 100 * (pos / 8));
  }
}

TEST(Split, PatchModeIsStratifiedAndMixesImages) {
  const auto corpus = small_corpus(4, 2, 5);
  const auto s = split_50_50(corpus, small_config(SplitMode::ByPatch, 20));
  const auto count_pos = [](const std::vector<Patch>& v) {
    return std::count_if(v.begin(), v.end(), [](auto& p) { return p.label == PatchLabel::Positive; });
  };
  EXPECT_EQ(count_pos(s.train) + count_pos(s.test), static_cast<long>(s.stats.positives_original * 8));
  EXPECT_LE(std::abs(count_pos(s.train) - count_pos(s.test)), 1);
}

TEST(PatchCache, RoundTripAndCorruption) {
  PatchCache cache{small_config(SplitMode::ByImage, 5), split_50_50(small_corpus(4, 1, 6), small_config(SplitMode::ByImage, 5))};
  const auto bytes = serialize_patch_cache(cache);
  const auto back = deserialize_patch_cache(bytes);
  EXPECT_EQ(back.config.spec, cache.config.spec);
  EXPECT_EQ(back.split.train, cache.split.train);
  EXPECT_EQ(back.split.test, cache.split.test);
  EXPECT_EQ(back.split.stats, cache.split.stats);
  EXPECT_EQ(serialize_patch_cache(back), bytes);

  auto corrupt = bytes;
  corrupt[corrupt.size() / 2] ^= 0x40;
  try {
    deserialize_patch_cache(corrupt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ChecksumMismatch);
  }
  try {
    deserialize_patch_cache(std::span(bytes).first(bytes.size() - 9));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TruncatedFile);
  }
}
