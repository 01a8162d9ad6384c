#include "pathoscope/detect/detector.hpp"

#include <algorithm>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "pathoscope/core/error.hpp"

namespace pathoscope::detect {

using data::BoundingBox;

void DetectorConfig::validate() const {
  if (stride < 1) throw Error(ErrorCode::ConfigInvalid, "stride must be >= 1");
  if (!(probability_threshold > 0.0 && probability_threshold <= 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "probability_threshold must be in (0, 1]");
  }
  if (!(overlap_threshold > 0.0 && overlap_threshold < 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "overlap_threshold must be in (0, 1)");
  }
  if (threads < 1) throw Error(ErrorCode::ConfigInvalid, "threads must be >= 1");
}

int default_stride(int patch_size) { return std::max(1, patch_size / 4); }

std::size_t window_count(int width, int height, int p, int stride) {
  if (width < p || height < p) return 0;
  const auto per_axis = [&](int extent) { return static_cast<std::size_t>((extent - p + stride) / stride); };
  return per_axis(width) * per_axis(height);
}

std::vector<Candidate> score_image(const model::TrainedModel& model, const data::AnnotatedImage& image,
                                   const DetectorConfig& config) {
  config.validate();
  const int p = model.patch_size();
  const int w = image.pixels.width(), h = image.pixels.height();
  if (w < p || h < p) {
    throw Error(ErrorCode::ImageTooSmall, "image " + image.id + " (" + std::to_string(w) + "x" + std::to_string(h) +
                                              ") is smaller than one " + std::to_string(p) + "px patch");
  }
  std::vector<std::pair<int, int>> origins;
  for (int y = 0; y + p <= h; y += config.stride)
    for (int x = 0; x + p <= w; x += config.stride) origins.emplace_back(x, y);

  std::vector<double> probs(origins.size());
  const auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto [x, y] = origins[i];
      probs[i] = model::predict_patch(model, data::crop_patch(image, x, y, p, data::PatchLabel::Negative));
    }
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(config.threads), origins.size());
  if (n_threads <= 1) {
    work(0, origins.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (origins.size() + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back(work, std::min(origins.size(), t * chunk), std::min(origins.size(), (t + 1) * chunk));
    }
  }

  std::vector<Candidate> out;
  for (std::size_t i = 0; i < origins.size(); ++i) {
    if (probs[i] < config.probability_threshold) continue;
    const auto [x, y] = origins[i];
    out.push_back({BoundingBox{x, y, x + p, y + p, {}}, probs[i]});
  }
  return out;
}

std::vector<Detection> non_max_suppression(const std::vector<Candidate>& candidates, double overlap_threshold) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ca = candidates[a];
    const auto& cb = candidates[b];
    if (ca.probability != cb.probability) return ca.probability > cb.probability;
    if (ca.box.y_min != cb.box.y_min) return ca.box.y_min < cb.box.y_min;
    if (ca.box.x_min != cb.box.x_min) return ca.box.x_min < cb.box.x_min;
    return a < b;
  });
  std::vector<char> suppressed(candidates.size(), 0);
  std::vector<Detection> kept;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (suppressed[k]) continue;
    const auto& keep = candidates[order[k]];
    kept.push_back(keep);
    for (std::size_t j = k + 1; j < order.size(); ++j) {
      if (!suppressed[j] && data::iou(keep.box, candidates[order[j]].box) > overlap_threshold) suppressed[j] = 1;
    }
  }
  return kept;
}

std::vector<Detection> detect(const model::TrainedModel& model, const data::AnnotatedImage& image,
                              const DetectorConfig& config) {
  const int factor = model.provenance.patch_spec.downsample_factor;
  const auto small = data::downsample(data::AnnotatedImage{image.id, image.pixels, {}}, factor);
  auto detections = non_max_suppression(score_image(model, small, config), config.overlap_threshold);
  for (auto& d : detections) {
    d.box.x_min *= factor;
    d.box.y_min *= factor;
    d.box.x_max *= factor;
    d.box.y_max *= factor;
  }
  return detections;
}

MatchResult match_detections(const std::vector<Detection>& detections, const std::vector<BoundingBox>& truth) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detections[a].probability > detections[b].probability; });
  MatchResult r;
  std::vector<char> taken(truth.size(), 0);
  for (const std::size_t d : order) {
    const auto& box = detections[d].box;
    const double cx = box.center_x(), cy = box.center_y();
    std::size_t best = truth.size();
    double best_iou = -1.0;
    for (std::size_t t = 0; t < truth.size(); ++t) {
      if (taken[t]) continue;
      const auto& tb = truth[t];
      const double overlap = data::iou(box, tb);
      const bool centre_inside = cx >= tb.x_min && cx < tb.x_max && cy >= tb.y_min && cy < tb.y_max;
      if ((centre_inside || overlap >= 0.5) && overlap > best_iou) {
        best = t;
        best_iou = overlap;
      }
    }
    if (best < truth.size()) {
      taken[best] = 1;
      r.pairs.emplace_back(d, best);
      ++r.true_positives;
    } else {
      ++r.false_positives;
    }
  }
  r.false_negatives = truth.size() - r.true_positives;
  return r;
}

std::string detection_jsonl(const std::string& image_id, const std::vector<Detection>& detections) {
  std::string out;
  for (const auto& d : detections) {
    const nlohmann::json j = {{"image_id", image_id},
                              {"bbox", {d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max}},
                              {"probability", d.probability}};
    out += j.dump() + "\n";
  }
  return out;
}

namespace {

void outline(data::Image& img, const BoundingBox& b, int line, float r, float g, float bl) {
  const auto paint = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) return;
    img.at(x, y, 0) = r;
    img.at(x, y, 1) = g;
    img.at(x, y, 2) = bl;
  };
  for (int y = b.y_min; y < b.y_max; ++y)
    for (int x = b.x_min; x < b.x_max; ++x) {
      const bool edge = x < b.x_min + line || x >= b.x_max - line || y < b.y_min + line || y >= b.y_max - line;
      if (edge) paint(x, y);
    }
}

}  // namespace

data::Image render_overlay(const data::Image& image, const std::vector<BoundingBox>& truth,
                           const std::vector<Detection>& detections, int line_width) {
  data::Image out = image;
  for (const auto& b : truth) outline(out, b, line_width, 255.0f, 255.0f, 255.0f);
  for (const auto& d : detections) outline(out, d.box, line_width, 255.0f, 0.0f, 0.0f);
  return out;
}

}  // namespace pathoscope::detect
