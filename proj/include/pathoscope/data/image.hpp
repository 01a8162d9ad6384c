#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace pathoscope::data {

/// Half-open pixel box [x_min, x_max) x [y_min, y_max).
struct BoundingBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;
  std::string label;

  int width() const { return x_max - x_min; }
  int height() const { return y_max - y_min; }
  long long area() const { return static_cast<long long>(width()) * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }

  /// 0 <= x_min < x_max <= width and likewise for y.
  bool within(int image_width, int image_height) const {
    return 0 <= x_min && x_min < x_max && x_max <= image_width && 0 <= y_min && y_min < y_max &&
           y_max <= image_height;
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

long long intersection_area(const BoundingBox& a, const BoundingBox& b);
/// True when the boxes share at least one pixel.
bool intersects(const BoundingBox& a, const BoundingBox& b);
double iou(const BoundingBox& a, const BoundingBox& b);

/// Interleaved H x W x 3 raster with real-valued channels on the 0..255 scale.
/// Decoded files hold integers; downsampling produces fractional means.
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int width, int height, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  float& at(int x, int y, int c) { return pixels_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c]; }
  float at(int x, int y, int c) const {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }

  std::vector<float>& pixels() { return pixels_; }
  const std::vector<float>& pixels() const { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> pixels_;
};

struct AnnotatedImage {
  std::string id;
  Image pixels;
  std::vector<BoundingBox> boxes;

  /// Throws InvariantViolation if any box leaves the raster.
  void validate() const;
};

/// Throws InvariantViolation on a duplicate id or an invalid image.
void validate_corpus(const std::vector<AnnotatedImage>& corpus);

}  // namespace pathoscope::data
