// Generalized alternating projection with a total-variation prior: recovers
// the B-frame intermediate video from one coded snapshot and its masks.

#ifndef KHCV_GAP_TV_HPP_
#define KHCV_GAP_TV_HPP_

#include <cstddef>
#include <vector>

#include "khcv/tensor.hpp"

namespace khcv {

struct GapTvParams {
  int outer_iters = 60;
  double tv_weight = 0.07;
  int tv_inner_iters = 5;
  double epsilon_r = 1e-8;  // floor on per-pixel mask coverage

  void validate() const;
};

struct GapTvResult {
  VideoCube video;
  // ||y - A(x)||_2 right after each projection step, one entry per outer
  // iteration.
  std::vector<double> projection_residuals;
  // Same norm after the TV step of each iteration (diagnostic only).
  std::vector<double> denoised_residuals;
  // Pixels whose masks are closed in every frame; the data step never
  // touches them.
  std::size_t uncovered_pixels = 0;
  Frame coverage;  // sum_k c_k^2
};

GapTvResult gap_tv_reconstruct_detailed(const Frame& y, const CodingCube& masks,
                                        const GapTvParams& params = {});

VideoCube gap_tv_reconstruct(const Frame& y, const CodingCube& masks,
                             const GapTvParams& params = {});

// Isotropic TV proximal step, computed with the dual projected-gradient
// iteration (step 0.25) started from a zero dual field.
Frame tv_denoise(const Frame& frame, double weight, int inner_iters);

// sum_p sqrt(dx^2 + dy^2) with forward differences and a replicated border.
double total_variation(const Frame& frame);

// ||y - sum_k c_k * x_k||_2.
double data_residual(const Frame& y, const CodingCube& masks, const VideoCube& x);

}  // namespace khcv

#endif  // KHCV_GAP_TV_HPP_
