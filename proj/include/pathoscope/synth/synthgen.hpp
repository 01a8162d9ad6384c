#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pathoscope/data/image.hpp"
#include "pathoscope/data/manifest.hpp"

namespace pathoscope::synth {

template <typename T>
struct Range {
  T min;
  T max;
  friend bool operator==(const Range&, const Range&) = default;
};

/// Bright textured background, dark elliptical "pathogens" (annotated), ring
/// and bar confounders and small debris specks (not annotated).
struct SynthConfig {
  int n_images = 200;
  int image_size = 256;
  Range<int> objects_per_image{1, 4};
  Range<double> object_axes{7.0, 14.0};  // semi-axis lengths, px
  Range<double> object_intensity{50.0, 120.0};  // darkness of object body, 0..255
  Range<int> confounders_per_image{2, 6};
  double background_noise_std = 8.0;
  std::uint64_t seed = 7;
  std::string label = "synthetic-pathogen";

  /// ConfigInvalid for inverted ranges or objects that cannot fit.
  void validate() const;
};

struct SynthCorpus {
  std::vector<data::AnnotatedImage> images;
  data::Manifest manifest;  // files are images/<id>.png
};

struct Ellipse {
  double cx, cy;  // centre, pixel-edge coordinates
  double a, b;    // semi-axes
  double theta;   // rotation of the a-axis, radians
};

/// Ground-truth geometry alongside the rendered image; ellipses[i] is boxes[i].
struct SynthImage {
  data::AnnotatedImage image;
  std::vector<Ellipse> ellipses;
};

std::string image_id(int index);

/// Image `index` alone; seeded by (config.seed, image id).
SynthImage generate_image(const SynthConfig& config, int index);

SynthCorpus generate(const SynthConfig& config);

/// Writes images/<id>.png and manifest.json under `dir`.
void write_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus);

}  // namespace pathoscope::synth
