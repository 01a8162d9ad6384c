#include "pathoscope/data/patchset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "pathoscope/core/error.hpp"
#include "pathoscope/core/rng.hpp"

namespace pathoscope::data {

void PatchSpec::validate() const {
  if (downsample_factor < 1) throw Error(ErrorCode::ConfigInvalid, "downsample_factor must be >= 1");
  if (patch_size < 2) throw Error(ErrorCode::ConfigInvalid, "patch_size must be >= 2");
  if (stride < 1) throw Error(ErrorCode::ConfigInvalid, "stride must be >= 1");
  if (neg_cap_ratio < 1) throw Error(ErrorCode::ConfigInvalid, "neg_cap_ratio must be >= 1");
  if (target_label.empty()) throw Error(ErrorCode::ConfigInvalid, "target_label is empty");
}

template <typename T>
nn::Tensor<T> to_tensor(const Patch& patch) {
  const auto n = static_cast<std::size_t>(patch.size);
  std::vector<T> chw(3 * n * n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t c = 0; c < 3; ++c) chw[(c * n + y) * n + x] = static_cast<T>(patch.pixels[(y * n + x) * 3 + c]);
  return nn::Tensor<T>({3, n, n}, std::move(chw));
}

template nn::Tensor<float> to_tensor<float>(const Patch&);
template nn::Tensor<double> to_tensor<double>(const Patch&);

AnnotatedImage downsample(const AnnotatedImage& image, int factor, int min_size) {
  if (factor < 1) throw Error(ErrorCode::InvalidArgument, "downsample factor must be >= 1");
  const int w = image.pixels.width() / factor, h = image.pixels.height() / factor;
  if (w < std::max(min_size, 1) || h < std::max(min_size, 1)) {
    throw Error(ErrorCode::FactorTooLarge, "image " + image.id + " downsampled by " + std::to_string(factor) +
                                               " is " + std::to_string(w) + "x" + std::to_string(h) +
                                               ", below " + std::to_string(min_size));
  }
  if (factor == 1) return image;
  AnnotatedImage out{image.id, Image(w, h), {}};
  const float inv = 1.0f / static_cast<float>(factor * factor);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < Image::kChannels; ++c) {
        float sum = 0.0f;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) sum += image.pixels.at(x * factor + dx, y * factor + dy, c);
        out.pixels.at(x, y, c) = sum * inv;
      }
    }
  }
  auto ceil_div = [factor](int v) { return (v + factor - 1) / factor; };
  for (const auto& b : image.boxes) {
    BoundingBox s{b.x_min / factor, b.y_min / factor, std::min(ceil_div(b.x_max), w), std::min(ceil_div(b.y_max), h),
                  b.label};
    if (s.x_min < s.x_max && s.y_min < s.y_max) out.boxes.push_back(std::move(s));
  }
  return out;
}

AnnotatedImage downsample(const AnnotatedImage& image, const PatchSpec& spec) {
  return downsample(image, spec.downsample_factor, spec.patch_size);
}

Patch crop_patch(const AnnotatedImage& image, int x0, int y0, int size, PatchLabel label) {
  Patch p;
  p.size = size;
  p.label = label;
  p.source_image_id = image.id;
  p.origin_x = x0;
  p.origin_y = y0;
  p.pixels.resize(static_cast<std::size_t>(size) * size * 3);
  constexpr float kScale = 1.0f / 255.0f;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) {
        p.pixels[(static_cast<std::size_t>(y) * size + x) * 3 + c] =
            std::clamp(image.pixels.at(x0 + x, y0 + y, c) * kScale, 0.0f, 1.0f);
      }
  return p;
}

PositiveExtraction extract_positive_patches(const AnnotatedImage& image, const PatchSpec& spec) {
  PositiveExtraction out;
  const int p = spec.patch_size;
  for (const auto& b : image.boxes) {
    if (b.label != spec.target_label) continue;
    const int x0 = (b.x_min + b.x_max) / 2 - p / 2;
    const int y0 = (b.y_min + b.y_max) / 2 - p / 2;
    if (x0 < 0 || y0 < 0 || x0 + p > image.pixels.width() || y0 + p > image.pixels.height()) {
      ++out.skipped;
      continue;
    }
    out.patches.push_back(crop_patch(image, x0, y0, p, PatchLabel::Positive));
  }
  return out;
}

std::vector<Patch> sample_negative_patches(const AnnotatedImage& image, const PatchSpec& spec, std::size_t count,
                                           std::uint64_t seed) {
  const int p = spec.patch_size;
  if (image.pixels.width() < p || image.pixels.height() < p) {
    throw Error(ErrorCode::ImageTooSmall, "image " + image.id + " is smaller than a patch");
  }
  Rng rng(seed);
  std::vector<Patch> out;
  out.reserve(count);
  const std::size_t max_rejections = 1000 * count;
  std::size_t rejections = 0;
  while (out.size() < count) {
    const int x0 = static_cast<int>(uniform_int(rng, 0, image.pixels.width() - p));
    const int y0 = static_cast<int>(uniform_int(rng, 0, image.pixels.height() - p));
    const BoundingBox window{x0, y0, x0 + p, y0 + p, {}};
    const bool hit = std::any_of(image.boxes.begin(), image.boxes.end(),
                                 [&](const BoundingBox& b) { return intersects(window, b); });
    if (hit) {
      if (++rejections >= max_rejections) {
        throw Error(ErrorCode::SamplingExhausted, "image " + image.id + ": no box-free window after " +
                                                      std::to_string(rejections) + " attempts");
      }
      continue;
    }
    out.push_back(crop_patch(image, x0, y0, p, PatchLabel::Negative));
  }
  return out;
}

std::vector<Patch> balance(const std::vector<Patch>& positives, const std::vector<Patch>& negatives, int cap_ratio,
                           std::uint64_t seed) {
  if (positives.empty()) throw Error(ErrorCode::NoPositives, "cannot balance against zero positives");
  if (cap_ratio < 1) throw Error(ErrorCode::InvalidArgument, "cap ratio must be >= 1");
  const std::size_t keep = std::min(negatives.size(), static_cast<std::size_t>(cap_ratio) * positives.size());
  if (keep == negatives.size()) return negatives;
  std::vector<std::size_t> idx(negatives.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates: the first `keep` slots become a uniform sample.
  for (std::size_t i = 0; i < keep; ++i) {
    const auto j = static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(i),
                                                        static_cast<std::int64_t>(idx.size() - 1)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  std::vector<Patch> out;
  out.reserve(keep);
  for (auto i : idx) out.push_back(negatives[i]);
  return out;
}

namespace {

Patch transformed(const Patch& in, int t) {
  Patch out = in;
  out.augmented = t != 0;
  out.transform_id = t;
  if (t == 0) return out;
  const int n = in.size;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      // Source coordinate for output (x, y): undo the rotation, then the flip.
      int sx = x, sy = y;
      for (int r = 0; r < t % 4; ++r) {
        const int px = sx;
        sx = n - 1 - sy;
        sy = px;
      }
      if (t >= 4) sx = n - 1 - sx;
      for (int c = 0; c < 3; ++c) {
        out.pixels[(static_cast<std::size_t>(y) * n + x) * 3 + c] = in.pixels[(static_cast<std::size_t>(sy) * n + sx) * 3 + c];
      }
    }
  }
  return out;
}

struct Generated {
  std::vector<Patch> positives;  // original, not yet augmented
  std::vector<Patch> negatives;
  SplitStats stats;
};

Generated generate(const std::vector<const AnnotatedImage*>& images, const BuildConfig& cfg) {
  Generated g;
  for (const auto* img : images) {
    const auto ds = downsample(*img, cfg.spec);
    auto pos = extract_positive_patches(ds, cfg.spec);
    g.stats.positives_skipped_at_border += pos.skipped;
    for (auto& p : pos.patches) g.positives.push_back(std::move(p));
    auto neg = sample_negative_patches(ds, cfg.spec, cfg.negatives_per_image, derive_seed(cfg.seed, "negatives/" + img->id));
    for (auto& p : neg) g.negatives.push_back(std::move(p));
  }
  g.stats.positives_original = g.positives.size();
  g.stats.negatives_sampled = g.negatives.size();
  return g;
}

std::vector<Patch> finish_partition(Generated& g, const BuildConfig& cfg, const std::string& name) {
  auto kept = balance(g.positives, g.negatives, cfg.spec.neg_cap_ratio, derive_seed(cfg.seed, "balance/" + name));
  g.stats.negatives_kept += kept.size();
  std::vector<Patch> out;
  out.reserve(g.positives.size() * 8 + kept.size());
  for (const auto& p : g.positives) {
    for (auto& a : augment(p)) out.push_back(std::move(a));
  }
  for (auto& n : kept) out.push_back(std::move(n));
  return out;
}

void add(SplitStats& into, const SplitStats& s) {
  into.positives_original += s.positives_original;
  into.positives_skipped_at_border += s.positives_skipped_at_border;
  into.negatives_sampled += s.negatives_sampled;
  into.negatives_kept += s.negatives_kept;
}

std::vector<std::string> ids_in(const std::vector<Patch>& patches) {
  std::set<std::string> ids;
  for (const auto& p : patches) ids.insert(p.source_image_id);
  return {ids.begin(), ids.end()};
}

}  // namespace

std::vector<Patch> augment(const Patch& patch) {
  if (patch.size <= 0 || patch.pixels.size() != static_cast<std::size_t>(patch.size) * patch.size * 3) {
    throw Error(ErrorCode::NotSquare, "patch pixels do not form a square size x size x 3 raster");
  }
  std::vector<Patch> out;
  out.reserve(8);
  out.push_back(patch);
  for (int t = 1; t < 8; ++t) out.push_back(transformed(patch, t));
  return out;
}

DatasetSplit split_50_50(const std::vector<AnnotatedImage>& corpus, const BuildConfig& cfg) {
  cfg.spec.validate();
  if (corpus.size() < 2) throw Error(ErrorCode::CorpusTooSmall, "a 50/50 split needs at least two images");
  validate_corpus(corpus);

  DatasetSplit split;
  split.seed = cfg.seed;
  split.mode = cfg.mode;

  if (cfg.mode == SplitMode::ByImage) {
    std::vector<const AnnotatedImage*> order;
    for (const auto& img : corpus) order.push_back(&img);
    Rng rng(derive_seed(cfg.seed, "split"));
    shuffle(order.begin(), order.end(), rng);
    const std::size_t n_train = order.size() - order.size() / 2;
    std::vector<const AnnotatedImage*> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<const AnnotatedImage*> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    for (const auto* i : train) split.train_image_ids.push_back(i->id);
    for (const auto* i : test) split.test_image_ids.push_back(i->id);

    auto gtrain = generate(train, cfg);
    split.train = finish_partition(gtrain, cfg, "train");
    auto gtest = generate(test, cfg);
    split.test = finish_partition(gtest, cfg, "test");
    add(split.stats, gtrain.stats);
    add(split.stats, gtest.stats);
    return split;
  }

  // Patch-level: augmentation happens before the split, so transformed copies
  // of one object can land on both sides. Each class is halved separately.
  std::vector<const AnnotatedImage*> all;
  for (const auto& img : corpus) all.push_back(&img);
  auto g = generate(all, cfg);
  auto patches = finish_partition(g, cfg, "all");
  split.stats = g.stats;
  std::vector<Patch> pos, neg;
  for (auto& p : patches) (p.label == PatchLabel::Positive ? pos : neg).push_back(std::move(p));
  for (auto* cls : {&pos, &neg}) {
    Rng rng(derive_seed(cfg.seed, cls == &pos ? "patch-split/positive" : "patch-split/negative"));
    shuffle(cls->begin(), cls->end(), rng);
    const std::size_t n_train = cls->size() - cls->size() / 2;
    for (std::size_t i = 0; i < cls->size(); ++i) {
      (i < n_train ? split.train : split.test).push_back(std::move((*cls)[i]));
    }
  }
  split.train_image_ids = ids_in(split.train);
  split.test_image_ids = ids_in(split.test);
  return split;
}

}  // namespace pathoscope::data
