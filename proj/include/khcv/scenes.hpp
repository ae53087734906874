// Analytic synthetic scenes. Every generator evaluates a continuous function,
// so sub-pixel motion is exact and ground-truth flow is known in closed form.

#ifndef KHCV_SCENES_HPP_
#define KHCV_SCENES_HPP_

#include <cstdint>
#include <vector>

#include "khcv/tensor.hpp"

namespace khcv {

// Band-limited texture: a sum of random plane waves around mean 0.5.
class PlaneWaveTexture {
 public:
  PlaneWaveTexture(std::uint64_t seed, int components = 24, double min_frequency = 0.02,
                   double max_frequency = 0.08, double contrast = 0.15);

  // Intensity at continuous position (x = column, y = row), clamped to [0, 1].
  double operator()(double x, double y) const;

  Frame render(int height, int width, double shift_x = 0.0, double shift_y = 0.0) const;

 private:
  struct Wave {
    double fx, fy, phase;
  };
  std::vector<Wave> waves_;
  double amplitude_;
};

// Frame t shows the texture translated by t * (vx, vy) pixels.
VideoCube translating_texture(int height, int width, int frames, double vx, double vy,
                              std::uint64_t seed);

// Gaussian blob on a dark background.
Frame gaussian_blob(int height, int width, double cx, double cy, double sigma,
                    double background = 0.1, double peak = 0.8);

// Bright square of the given side moving by (vx, vy) px per frame over a
// smooth vertical gradient.
VideoCube moving_square(int height, int width, int frames, int side, double vx, double vy);

// Smooth static image repeated over all frames.
VideoCube static_smooth_scene(int height, int width, int frames);

}  // namespace khcv

#endif  // KHCV_SCENES_HPP_
