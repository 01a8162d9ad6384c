#include "pathoscope/data/image.hpp"

#include <algorithm>
#include <set>

#include "pathoscope/core/error.hpp"

namespace pathoscope::data {

long long intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const long long w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const long long h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  return (w > 0 && h > 0) ? w * h : 0;
}

bool intersects(const BoundingBox& a, const BoundingBox& b) { return intersection_area(a, b) > 0; }

double iou(const BoundingBox& a, const BoundingBox& b) {
  const long long inter = intersection_area(a, b);
  if (inter == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(a.area() + b.area() - inter);
}

Image::Image(int width, int height, float fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw Error(ErrorCode::InvalidArgument, "negative image size");
  pixels_.assign(static_cast<std::size_t>(width) * height * kChannels, fill);
}

void AnnotatedImage::validate() const {
  for (const auto& b : boxes) {
    if (!b.within(pixels.width(), pixels.height())) {
      throw Error(ErrorCode::InvariantViolation,
                  "image " + id + ": box [" + std::to_string(b.x_min) + "," + std::to_string(b.y_min) + "," +
                      std::to_string(b.x_max) + "," + std::to_string(b.y_max) + "] outside " +
                      std::to_string(pixels.width()) + "x" + std::to_string(pixels.height()));
    }
  }
}

void validate_corpus(const std::vector<AnnotatedImage>& corpus) {
  std::set<std::string> ids;
  for (const auto& img : corpus) {
    if (!ids.insert(img.id).second) throw Error(ErrorCode::InvariantViolation, "duplicate image id " + img.id);
    img.validate();
  }
}

}  // namespace pathoscope::data
