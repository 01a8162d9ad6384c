#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pathoscope/data/image.hpp"
#include "pathoscope/data/patchset.hpp"
#include "pathoscope/model/model.hpp"

namespace pathoscope::detect {

struct Candidate {
  data::BoundingBox box;  // patch-sized window, downsampled coordinates
  double probability = 0.0;
  friend bool operator==(const Candidate&, const Candidate&) = default;
};

using Detection = Candidate;

struct DetectorConfig {
  int stride = 8;
  double probability_threshold = 0.5;
  double overlap_threshold = 0.3;  // IoU above this suppresses
  int threads = 1;

  /// ConfigInvalid unless stride >= 1, probability_threshold in (0, 1],
  /// overlap_threshold in (0, 1) and threads >= 1.
  void validate() const;
  friend bool operator==(const DetectorConfig&, const DetectorConfig&) = default;
};

/// Default inference stride for a patch size: p / 4, at least 1.
int default_stride(int patch_size);

/// ceil((extent - p + 1) / stride) positions per axis, 0 when extent < p.
std::size_t window_count(int width, int height, int patch_size, int stride);

/// Every window of an already-downsampled image; candidates with probability
/// >= threshold, in row-major window order. ImageTooSmall below one patch.
std::vector<Candidate> score_image(const model::TrainedModel& model, const data::AnnotatedImage& downsampled,
                                   const DetectorConfig& config);

/// Greedy suppression in (probability desc, y, x, input index) order.
std::vector<Detection> non_max_suppression(const std::vector<Candidate>& candidates, double overlap_threshold);

/// Downsample by the model's patch spec, score, suppress, and rescale boxes
/// to the original image's coordinates.
std::vector<Detection> detect(const model::TrainedModel& model, const data::AnnotatedImage& image,
                              const DetectorConfig& config);

struct MatchResult {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (detection, truth)
};

/// One-to-one greedy matching by descending probability. A detection may take
/// an unmatched truth box containing its centre or with IoU >= 0.5; among
/// several, the highest IoU wins, then the lowest index.
MatchResult match_detections(const std::vector<Detection>& detections, const std::vector<data::BoundingBox>& truth);

/// {"image_id": ..., "bbox": [x_min, y_min, x_max, y_max], "probability": ...}
std::string detection_jsonl(const std::string& image_id, const std::vector<Detection>& detections);

/// Copy of `image` with truth boxes outlined in white and detections in red.
data::Image render_overlay(const data::Image& image, const std::vector<data::BoundingBox>& truth,
                           const std::vector<Detection>& detections, int line_width = 2);

}  // namespace pathoscope::detect
