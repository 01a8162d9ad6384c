#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pathoscope/data/image.hpp"
#include "pathoscope/neural/tensor.hpp"

namespace pathoscope::data {

struct PatchSpec {
  int downsample_factor = 2;
  int patch_size = 32;  // square, in downsampled pixels
  int stride = 8;
  int neg_cap_ratio = 100;
  std::string target_label = "synthetic-pathogen";

  /// patch_size >= 2, stride >= 1, neg_cap_ratio >= 1, downsample_factor >= 1.
  void validate() const;

  friend bool operator==(const PatchSpec&, const PatchSpec&) = default;
};

enum class PatchLabel : std::uint8_t { Negative = 0, Positive = 1 };

struct Patch {
  int size = 0;
  std::vector<float> pixels;  // size x size x 3, interleaved, in [0,1]
  PatchLabel label = PatchLabel::Negative;
  std::string source_image_id;
  int origin_x = 0;  // top-left, downsampled coordinates
  int origin_y = 0;
  bool augmented = false;
  int transform_id = 0;  // 0..7, see augment()

  float at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * size + x) * 3 + c]; }

  friend bool operator==(const Patch&, const Patch&) = default;
};

/// Channel-planar [3, size, size] copy, the network's input layout.
template <typename T>
nn::Tensor<T> to_tensor(const Patch& patch);

enum class SplitMode : std::uint8_t {
  ByImage = 0,  // partition source images, then generate patches per partition
  ByPatch = 1,  // generate and augment over the whole corpus, then split patches
};

struct SplitStats {
  std::size_t positives_original = 0;
  std::size_t positives_skipped_at_border = 0;
  std::size_t negatives_sampled = 0;
  std::size_t negatives_kept = 0;

  friend bool operator==(const SplitStats&, const SplitStats&) = default;
};

struct DatasetSplit {
  std::vector<Patch> train;
  std::vector<Patch> test;
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::ByImage;
  std::vector<std::string> train_image_ids;
  std::vector<std::string> test_image_ids;
  /// Summed over both partitions.
  SplitStats stats;
};

struct BuildConfig {
  PatchSpec spec;
  /// Random negative windows drawn per image before balancing.
  std::size_t negatives_per_image = 40;
  SplitMode mode = SplitMode::ByImage;
  std::uint64_t seed = 0;
};

/// Box-filter reduction by `factor`; trailing pixels that do not fill a block
/// are dropped. Boxes map to floor(min/f), ceil(max/f) so coverage is kept;
/// boxes that fall entirely in the dropped margin are removed.
/// FactorTooLarge when the result would be smaller than `min_size`.
AnnotatedImage downsample(const AnnotatedImage& image, int factor, int min_size = 1);
AnnotatedImage downsample(const AnnotatedImage& image, const PatchSpec& spec);

/// Window of `size` pixels at (x, y), scaled to [0,1].
Patch crop_patch(const AnnotatedImage& image, int x, int y, int size, PatchLabel label);

struct PositiveExtraction {
  std::vector<Patch> patches;
  std::size_t skipped = 0;
};

/// One patch per target-label box, centred on the box. Boxes whose window
/// would leave the raster are skipped and counted.
PositiveExtraction extract_positive_patches(const AnnotatedImage& image, const PatchSpec& spec);

/// Uniformly random windows that share no pixel with any annotated box.
/// SamplingExhausted after 1000 * count rejections.
std::vector<Patch> sample_negative_patches(const AnnotatedImage& image, const PatchSpec& spec, std::size_t count,
                                           std::uint64_t seed);

/// Random subset of `negatives` of size min(|neg|, cap_ratio * |pos|), kept in
/// input order. NoPositives when `positives` is empty.
std::vector<Patch> balance(const std::vector<Patch>& positives, const std::vector<Patch>& negatives, int cap_ratio,
                           std::uint64_t seed);

/// The eight dihedral transforms. transform t flips horizontally when t >= 4,
/// then rotates counter-clockwise by 90 * (t % 4) degrees; element 0 is the
/// input unchanged.
std::vector<Patch> augment(const Patch& patch);

/// 50/50 split per `config.mode`; deterministic in (corpus, config).
/// CorpusTooSmall below two images.
DatasetSplit split_50_50(const std::vector<AnnotatedImage>& corpus, const BuildConfig& config);

}  // namespace pathoscope::data
