#include "pathoscope/synth/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pathoscope/core/error.hpp"
#include "pathoscope/core/rng.hpp"
#include "pathoscope/data/imageio.hpp"

namespace pathoscope::synth {

using data::AnnotatedImage;
using data::BoundingBox;
using data::Image;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Rgb {
  double r, g, b;
};

struct Blob {
  double cx, cy, sigma, amplitude;
};

bool near_any(const BoundingBox& box, const std::vector<BoundingBox>& taken, int margin) {
  const BoundingBox grown{box.x_min - margin, box.y_min - margin, box.x_max + margin, box.y_max + margin, {}};
  return std::any_of(taken.begin(), taken.end(), [&](const BoundingBox& t) { return data::intersects(grown, t); });
}

// Ellipse of semi-axes (a, b) rotated by theta; returns the tight box of the
// pixels it covers (pixel centres inside the ellipse).
template <typename Paint>
BoundingBox paint_ellipse(int width, int height, double cx, double cy, double a, double b, double theta, Paint paint) {
  const double c = std::cos(theta), s = std::sin(theta);
  const double reach = std::max(a, b) + 1.0;
  BoundingBox box{width, height, 0, 0, {}};
  for (int y = std::max(0, static_cast<int>(cy - reach)); y <= std::min(height - 1, static_cast<int>(cy + reach)); ++y) {
    for (int x = std::max(0, static_cast<int>(cx - reach)); x <= std::min(width - 1, static_cast<int>(cx + reach)); ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double u = (dx * c + dy * s) / a, v = (-dx * s + dy * c) / b;
      const double r2 = u * u + v * v;
      if (r2 > 1.0) continue;
      paint(x, y, r2);
      box.x_min = std::min(box.x_min, x);
      box.y_min = std::min(box.y_min, y);
      box.x_max = std::max(box.x_max, x + 1);
      box.y_max = std::max(box.y_max, y + 1);
    }
  }
  return box;
}

void blend(Image& img, int x, int y, const Rgb& colour, double alpha) {
  img.at(x, y, 0) = static_cast<float>((1 - alpha) * img.at(x, y, 0) + alpha * colour.r);
  img.at(x, y, 1) = static_cast<float>((1 - alpha) * img.at(x, y, 1) + alpha * colour.g);
  img.at(x, y, 2) = static_cast<float>((1 - alpha) * img.at(x, y, 2) + alpha * colour.b);
}

// Stain-like purple at the given darkness (0 = black, 255 = white).
Rgb stain(double darkness, Rng& rng) {
  const double tint = uniform(rng, -10, 10);
  return {darkness * 0.85 + tint, darkness * 0.6, darkness * 1.05 - tint};
}

}  // namespace

void SynthConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::ConfigInvalid, what); };
  if (n_images < 1) bad("n_images must be >= 1");
  if (image_size < 16) bad("image_size must be >= 16");
  if (objects_per_image.min < 0 || objects_per_image.min > objects_per_image.max) bad("objects_per_image range");
  if (confounders_per_image.min < 0 || confounders_per_image.min > confounders_per_image.max) bad("confounders_per_image range");
  if (object_axes.min < 1.0 || object_axes.min > object_axes.max) bad("object_axes range");
  if (4 * object_axes.max + 8 > image_size) bad("objects do not fit in image_size");
  if (object_intensity.min < 0.0 || object_intensity.max > 255.0 || object_intensity.min > object_intensity.max) {
    bad("object_intensity range must lie in [0,255]");
  }
  if (background_noise_std < 0.0) bad("background_noise_std must be >= 0");
  if (label.empty()) bad("label is empty");
}

std::string image_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "synth-%04d", index);
  return buf;
}

SynthImage generate_image(const SynthConfig& cfg, int index) {
  cfg.validate();
  const std::string id = image_id(index);
  Rng rng(derive_seed(cfg.seed, id));
  const int n = cfg.image_size;
  SynthImage result{{id, Image(n, n), {}}, {}};
  AnnotatedImage& out = result.image;
  Image& img = out.pixels;

  // Background: pale field with slow illumination and stain variation.
  const Rgb base{uniform(rng, 205, 230), uniform(rng, 195, 220), uniform(rng, 210, 235)};
  std::vector<Blob> blobs(6);
  for (auto& b : blobs) b = {uniform(rng, 0, n), uniform(rng, 0, n), uniform(rng, n / 10.0, n / 3.0), uniform(rng, -18, 18)};
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double shade = 0;
      for (const auto& b : blobs) {
        const double d2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy);
        shade += b.amplitude * std::exp(-d2 / (2 * b.sigma * b.sigma));
      }
      img.at(x, y, 0) = static_cast<float>(base.r + shade);
      img.at(x, y, 1) = static_cast<float>(base.g + shade);
      img.at(x, y, 2) = static_cast<float>(base.b + shade * 0.5);
    }
  }

  // Pale round "cells" scattered as clutter.
  const int cells = static_cast<int>(uniform_int(rng, 3, 10));
  for (int i = 0; i < cells; ++i) {
    const double r = uniform(rng, 8, 16);
    const Rgb c{uniform(rng, 185, 205), uniform(rng, 160, 185), uniform(rng, 185, 210)};
    paint_ellipse(n, n, uniform(rng, 0, n), uniform(rng, 0, n), r, r * uniform(rng, 0.85, 1.0), 0.0,
                  [&](int x, int y, double r2) { blend(img, x, y, c, 0.5 * (1 - r2 * r2)); });
  }

  std::vector<BoundingBox> taken;
  const int n_objects = static_cast<int>(uniform_int(rng, cfg.objects_per_image.min, cfg.objects_per_image.max));
  for (int i = 0; i < n_objects; ++i) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double a = uniform(rng, cfg.object_axes.min, cfg.object_axes.max);
      const double b = a * uniform(rng, 0.55, 0.85);
      const double margin = a + 2;
      const double cx = uniform(rng, margin, n - margin), cy = uniform(rng, margin, n - margin);
      const double theta = uniform(rng, 0, kPi);
      const BoundingBox reach{static_cast<int>(cx - a - 1), static_cast<int>(cy - a - 1), static_cast<int>(cx + a + 2),
                              static_cast<int>(cy + a + 2), {}};
      if (near_any(reach, taken, 3)) continue;
      const Rgb body = stain(uniform(rng, cfg.object_intensity.min, cfg.object_intensity.max), rng);
      const Rgb dot = stain(body.g * 0.45, rng);
      const double dot_u = uniform(rng, -0.35, 0.35), dot_v = uniform(rng, -0.3, 0.3);
      BoundingBox box = paint_ellipse(n, n, cx, cy, a, b, theta, [&](int x, int y, double r2) {
        blend(img, x, y, body, r2 > 0.8 ? 0.7 : 0.95);
        const double c = std::cos(theta), s = std::sin(theta);
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const double u = (dx * c + dy * s) / a - dot_u, v = (-dx * s + dy * c) / b - dot_v;
        if (u * u + v * v < 0.09) blend(img, x, y, dot, 0.9);
      });
      box.label = cfg.label;
      taken.push_back(box);
      out.boxes.push_back(std::move(box));
      result.ellipses.push_back({cx, cy, a, b, theta});
      break;
    }
  }

  // Confounders: dark rings and bars of similar stain, never annotated.
  const int n_conf = static_cast<int>(uniform_int(rng, cfg.confounders_per_image.min, cfg.confounders_per_image.max));
  std::vector<BoundingBox> objects = taken;
  for (int i = 0; i < n_conf; ++i) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double size = uniform(rng, cfg.object_axes.min, cfg.object_axes.max * 1.2);
      const double cx = uniform(rng, 0, n), cy = uniform(rng, 0, n);
      const BoundingBox reach{static_cast<int>(cx - size - 2), static_cast<int>(cy - size - 2),
                              static_cast<int>(cx + size + 3), static_cast<int>(cy + size + 3), {}};
      if (near_any(reach, objects, 2)) continue;
      const Rgb colour = stain(uniform(rng, cfg.object_intensity.min, cfg.object_intensity.max), rng);
      if (uniform01(rng) < 0.5) {
        const double thickness = uniform(rng, 0.2, 0.4);
        paint_ellipse(n, n, cx, cy, size, size, 0.0, [&](int x, int y, double r2) {
          if (r2 > (1 - thickness) * (1 - thickness)) blend(img, x, y, colour, 0.9);
        });
      } else {
        const double len = size, half_width = uniform(rng, 1.5, 3.0), theta = uniform(rng, 0, kPi);
        const double c = std::cos(theta), s = std::sin(theta);
        for (int y = std::max(0, static_cast<int>(cy - len - 2)); y < std::min(n, static_cast<int>(cy + len + 3)); ++y)
          for (int x = std::max(0, static_cast<int>(cx - len - 2)); x < std::min(n, static_cast<int>(cx + len + 3)); ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            if (std::abs(dx * c + dy * s) <= len && std::abs(-dx * s + dy * c) <= half_width) blend(img, x, y, colour, 0.9);
          }
      }
      taken.push_back(reach);
      break;
    }
  }

  // Debris: small dark specks anywhere, never annotated.
  const int specks = static_cast<int>(uniform_int(rng, 0, 8));
  for (int i = 0; i < specks; ++i) {
    const double r = uniform(rng, 1.0, 2.5);
    const Rgb colour = stain(uniform(rng, cfg.object_intensity.min, cfg.object_intensity.max), rng);
    paint_ellipse(n, n, uniform(rng, 0, n), uniform(rng, 0, n), r, r, 0.0,
                  [&](int x, int y, double) { blend(img, x, y, colour, 0.85); });
  }

  // Sensor noise, then quantise so the in-memory raster equals the decoded PNG.
  for (auto& v : img.pixels()) {
    const double noisy = v + cfg.background_noise_std * normal01(rng);
    v = static_cast<float>(std::clamp(std::round(noisy), 0.0, 255.0));
  }
  return result;
}

SynthCorpus generate(const SynthConfig& config) {
  config.validate();
  SynthCorpus corpus;
  for (int i = 0; i < config.n_images; ++i) {
    auto img = std::move(generate_image(config, i).image);
    corpus.manifest.images.push_back(
        {img.id, "images/" + img.id + ".png", img.pixels.width(), img.pixels.height(), img.boxes});
    corpus.images.push_back(std::move(img));
  }
  return corpus;
}

void write_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus) {
  std::filesystem::create_directories(dir / "images");
  for (std::size_t i = 0; i < corpus.images.size(); ++i) {
    data::write_png(dir / corpus.manifest.images[i].file, corpus.images[i].pixels);
  }
  data::save_manifest(dir / "manifest.json", corpus.manifest);
}

}  // namespace pathoscope::synth
