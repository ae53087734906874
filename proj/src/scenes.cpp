#include "khcv/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "khcv/capture.hpp"

namespace khcv {

PlaneWaveTexture::PlaneWaveTexture(std::uint64_t seed, int components, double min_frequency,
                                   double max_frequency, double contrast)
    : amplitude_(contrast * std::sqrt(2.0 / components)) {
  if (components < 1) throw ArgumentError("texture needs at least one component");
  const CounterRng rng(seed, 0x7E47);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  for (int n = 0; n < components; ++n) {
    const auto c = static_cast<std::uint64_t>(3 * n);
    const double radius = min_frequency + (max_frequency - min_frequency) * rng.uniform(c);
    const double angle = kTwoPi * rng.uniform(c + 1);
    waves_.push_back({radius * std::cos(angle), radius * std::sin(angle), kTwoPi * rng.uniform(c + 2)});
  }
}

double PlaneWaveTexture::operator()(double x, double y) const {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double s = 0.0;
  for (const auto& w : waves_) s += std::sin(kTwoPi * (w.fx * x + w.fy * y) + w.phase);
  return std::clamp(0.5 + amplitude_ * s, 0.0, 1.0);
}

Frame PlaneWaveTexture::render(int height, int width, double shift_x, double shift_y) const {
  Frame f(height, width);
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      f(i, j) = static_cast<float>((*this)(j - shift_x, i - shift_y));
    }
  }
  return f;
}

VideoCube translating_texture(int height, int width, int frames, double vx, double vy,
                              std::uint64_t seed) {
  const PlaneWaveTexture texture(seed);
  VideoCube cube(height, width, frames);
  for (int t = 0; t < frames; ++t) assign_frame(cube, t, texture.render(height, width, vx * t, vy * t));
  return cube;
}

Frame gaussian_blob(int height, int width, double cx, double cy, double sigma, double background,
                    double peak) {
  Frame f(height, width);
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      const double r2 = (j - cx) * (j - cx) + (i - cy) * (i - cy);
      f(i, j) = static_cast<float>(background + peak * std::exp(-r2 / (2.0 * sigma * sigma)));
    }
  }
  return f;
}

VideoCube moving_square(int height, int width, int frames, int side, double vx, double vy) {
  VideoCube cube(height, width, frames);
  for (int t = 0; t < frames; ++t) {
    const double x0 = (width - side) / 2.0 - vx * (frames - 1) / 2.0 + vx * t;
    const double y0 = (height - side) / 2.0 - vy * (frames - 1) / 2.0 + vy * t;
    for (int i = 0; i < height; ++i) {
      for (int j = 0; j < width; ++j) {
        // Pixel coverage of the square, so sub-pixel positions stay smooth.
        const double cover_x = std::clamp(std::min(j + 1.0, x0 + side) - std::max<double>(j, x0), 0.0, 1.0);
        const double cover_y = std::clamp(std::min(i + 1.0, y0 + side) - std::max<double>(i, y0), 0.0, 1.0);
        const double background = 0.2 + 0.3 * i / std::max(1, height - 1);
        cube(i, j, t) = static_cast<float>(background + (0.9 - background) * cover_x * cover_y);
      }
    }
  }
  return cube;
}

VideoCube static_smooth_scene(int height, int width, int frames) {
  VideoCube cube(height, width, frames);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  for (int t = 0; t < frames; ++t) {
    for (int i = 0; i < height; ++i) {
      for (int j = 0; j < width; ++j) {
        const double x = static_cast<double>(j) / width;
        const double y = static_cast<double>(i) / height;
        cube(i, j, t) = static_cast<float>(0.5 + 0.2 * std::sin(kTwoPi * x) * std::cos(kTwoPi * 0.5 * y) +
                                           0.15 * (x - 0.5));
      }
    }
  }
  return cube;
}

}  // namespace khcv
