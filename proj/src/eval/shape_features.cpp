#include "pathoscope/eval/shape_features.hpp"

#include <algorithm>
#include <cmath>

namespace pathoscope::eval {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kBins = 256;

int bin_of(double g) { return std::clamp(static_cast<int>(g * kBins), 0, kBins - 1); }

}  // namespace

int otsu_threshold_bin(const std::vector<double>& gray) {
  std::array<double, kBins> hist{};
  for (double g : gray) hist[static_cast<std::size_t>(bin_of(g))] += 1.0;
  const double total = static_cast<double>(gray.size());
  if (std::count_if(hist.begin(), hist.end(), [](double h) { return h > 0; }) < 2) return -1;
  double sum_all = 0.0;
  for (int b = 0; b < kBins; ++b) sum_all += b * hist[static_cast<std::size_t>(b)];
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_bin = -1;
  for (int t = 0; t < kBins - 1; ++t) {
    w0 += hist[static_cast<std::size_t>(t)];
    sum0 += t * hist[static_cast<std::size_t>(t)];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_bin = t;
    }
  }
  return best_bin;
}

std::vector<std::uint8_t> otsu_mask(const data::Patch& patch) {
  const std::size_t n = static_cast<std::size_t>(patch.size) * patch.size;
  std::vector<double> gray(n);
  for (std::size_t i = 0; i < n; ++i) {
    gray[i] = (static_cast<double>(patch.pixels[i * 3]) + patch.pixels[i * 3 + 1] + patch.pixels[i * 3 + 2]) / 3.0;
  }
  const int t = otsu_threshold_bin(gray);
  std::vector<std::uint8_t> mask(n, 0);
  if (t < 0) return mask;
  for (std::size_t i = 0; i < n; ++i) mask[i] = bin_of(gray[i]) <= t;
  return mask;
}

ShapeFeatureVector shape_features(const data::Patch& patch) {
  ShapeFeatureVector f{};
  const int s = patch.size;
  const auto mask = otsu_mask(patch);
  const auto on = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < s && y < s && mask[static_cast<std::size_t>(y) * s + x];
  };

  double m00 = 0, m10 = 0, m01 = 0;
  double perimeter = 0;
  std::array<double, 3> sum{}, sum2{};
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      if (!on(x, y)) continue;
      m00 += 1;
      m10 += x;
      m01 += y;
      perimeter += !on(x - 1, y) + !on(x + 1, y) + !on(x, y - 1) + !on(x, y + 1);
      for (int c = 0; c < 3; ++c) {
        const double v = patch.at(x, y, c);
        sum[static_cast<std::size_t>(c)] += v;
        sum2[static_cast<std::size_t>(c)] += v * v;
      }
    }
  if (m00 == 0) return f;

  const double cx = m10 / m00, cy = m01 / m00;
  double mu20 = 0, mu02 = 0, mu11 = 0, mu30 = 0, mu03 = 0, mu21 = 0, mu12 = 0;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      if (!on(x, y)) continue;
      const double dx = x - cx, dy = y - cy;
      mu20 += dx * dx;
      mu02 += dy * dy;
      mu11 += dx * dy;
      mu30 += dx * dx * dx;
      mu03 += dy * dy * dy;
      mu21 += dx * dx * dy;
      mu12 += dx * dy * dy;
    }

  f[0] = m00 / (static_cast<double>(s) * s);
  f[1] = perimeter / s;
  f[2] = 4 * kPi * m00 / (perimeter * perimeter);
  const double half_trace = (mu20 + mu02) / 2;
  const double root = std::sqrt((mu20 - mu02) * (mu20 - mu02) / 4 + mu11 * mu11);
  const double l1 = half_trace + root, l2 = half_trace - root;
  f[3] = l1 > 0 ? std::sqrt(std::max(0.0, 1 - l2 / l1)) : 0.0;
  const double centre = (s - 1) / 2.0;
  f[4] = std::hypot(cx - centre, cy - centre) / s;
  for (std::size_t c = 0; c < 3; ++c) {
    const double mean = sum[c] / m00;
    f[5 + c] = mean;
    f[8 + c] = std::sqrt(std::max(0.0, sum2[c] / m00 - mean * mean));
  }
  const auto eta = [&](double mu, int order) { return mu / std::pow(m00, 1 + order / 2.0); };
  const double n20 = eta(mu20, 2), n02 = eta(mu02, 2), n11 = eta(mu11, 2);
  const double n30 = eta(mu30, 3), n03 = eta(mu03, 3), n21 = eta(mu21, 3), n12 = eta(mu12, 3);
  f[11] = n20 + n02;
  f[12] = (n20 - n02) * (n20 - n02) + 4 * n11 * n11;
  f[13] = (n30 - 3 * n12) * (n30 - 3 * n12) + (3 * n21 - n03) * (3 * n21 - n03);
  return f;
}

}  // namespace pathoscope::eval
