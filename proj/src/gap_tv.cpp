#include "khcv/gap_tv.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

namespace khcv {
namespace {

constexpr float kDualStep = 0.25f;

// Frame-major samples of a cube, any precision.
template <typename T>
std::vector<double> forward_model(const CodingCube& masks, std::span<const T> x) {
  const std::size_t plane = masks.plane_size();
  std::vector<double> out(plane, 0.0);
  for (int k = 0; k < masks.frames(); ++k) {
    auto cs = masks.plane(k);
    const T* xs = x.data() + static_cast<std::size_t>(k) * plane;
    for (std::size_t n = 0; n < plane; ++n) {
      if (cs[n]) out[n] += static_cast<double>(xs[n]);
    }
  }
  return out;
}

double residual_norm(const Frame& y, std::span<const double> ax) {
  double sum = 0.0;
  auto ys = y.samples();
  for (std::size_t n = 0; n < ys.size(); ++n) {
    const double d = static_cast<double>(ys[n]) - ax[n];
    sum += d * d;
  }
  return std::sqrt(sum);
}

// Divergence, the negative adjoint of the forward-difference gradient.
void divergence(std::span<const float> px, std::span<const float> py, int h, int w,
                std::span<float> out) {
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const std::size_t n = static_cast<std::size_t>(i) * w + j;
      float d = 0.0f;
      if (j < w - 1) d += px[n];
      if (j > 0) d -= px[n - 1];
      if (i < h - 1) d += py[n];
      if (i > 0) d -= py[n - static_cast<std::size_t>(w)];
      out[n] = d;
    }
  }
}

}  // namespace

void GapTvParams::validate() const {
  if (outer_iters < 1) throw ArgumentError("outer_iters must be >= 1");
  if (tv_inner_iters < 1) throw ArgumentError("tv_inner_iters must be >= 1");
  if (!(tv_weight >= 0.0)) throw ArgumentError("tv_weight must be >= 0");
  if (!(epsilon_r > 0.0)) throw ArgumentError("epsilon_r must be > 0");
}

double total_variation(const Frame& frame) {
  const int h = frame.height();
  const int w = frame.width();
  double tv = 0.0;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double dx = j < w - 1 ? frame(i, j + 1) - frame(i, j) : 0.0;
      const double dy = i < h - 1 ? frame(i + 1, j) - frame(i, j) : 0.0;
      tv += std::sqrt(dx * dx + dy * dy);
    }
  }
  return tv;
}

Frame tv_denoise(const Frame& frame, double weight, int inner_iters) {
  if (weight < 0.0) throw ArgumentError("TV weight must be >= 0");
  if (inner_iters < 1) throw ArgumentError("TV inner iterations must be >= 1");
  if (weight == 0.0) return frame;

  const int h = frame.height();
  const int w = frame.width();
  const std::size_t n_px = frame.size();
  const float lambda = static_cast<float>(weight);
  const float inv_lambda = 1.0f / lambda;
  auto f = frame.samples();

  std::vector<float> px(n_px, 0.0f), py(n_px, 0.0f), div(n_px, 0.0f), a(n_px);
  for (int it = 0; it < inner_iters; ++it) {
    divergence(px, py, h, w, div);
    for (std::size_t n = 0; n < n_px; ++n) a[n] = div[n] - f[n] * inv_lambda;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const std::size_t n = static_cast<std::size_t>(i) * w + j;
        const float gx = j < w - 1 ? a[n + 1] - a[n] : 0.0f;
        const float gy = i < h - 1 ? a[n + static_cast<std::size_t>(w)] - a[n] : 0.0f;
        const float qx = px[n] + kDualStep * gx;
        const float qy = py[n] + kDualStep * gy;
        const float norm = std::max(1.0f, std::sqrt(qx * qx + qy * qy));
        px[n] = qx / norm;
        py[n] = qy / norm;
      }
    }
  }
  divergence(px, py, h, w, div);
  Frame out(h, w);
  auto o = out.samples();
  for (std::size_t n = 0; n < n_px; ++n) o[n] = f[n] - lambda * div[n];
  return out;
}

double data_residual(const Frame& y, const CodingCube& masks, const VideoCube& x) {
  if (!x.same_shape(masks) || !masks.same_plane_shape(y)) {
    throw ShapeError("data_residual: shape mismatch");
  }
  return residual_norm(y, forward_model(masks, x.samples()));
}

GapTvResult gap_tv_reconstruct_detailed(const Frame& y, const CodingCube& masks,
                                        const GapTvParams& params) {
  params.validate();
  if (!masks.same_plane_shape(y)) {
    throw ShapeError("gap_tv_reconstruct: snapshot " + std::to_string(y.height()) + "x" +
                     std::to_string(y.width()) + " vs masks " +
                     std::to_string(masks.height()) + "x" + std::to_string(masks.width()));
  }
  const int h = y.height();
  const int w = y.width();
  const int frames = masks.frames();
  const std::size_t plane = masks.plane_size();
  auto ys = y.samples();

  GapTvResult result;
  result.coverage = Frame(h, w);
  auto cov = result.coverage.samples();
  for (int k = 0; k < frames; ++k) {
    auto cs = masks.plane(k);
    for (std::size_t n = 0; n < plane; ++n) cov[n] += static_cast<float>(cs[n]);
  }
  std::vector<double> inv_cov(plane);
  for (std::size_t n = 0; n < plane; ++n) {
    if (cov[n] == 0.0f) ++result.uncovered_pixels;
    inv_cov[n] = 1.0 / std::max(static_cast<double>(cov[n]), params.epsilon_r);
  }

  // Double-precision iterate; frames drop to float only for the TV step.
  std::vector<double> xw(plane * static_cast<std::size_t>(frames));
  for (int k = 0; k < frames; ++k) {
    auto cs = masks.plane(k);
    double* xs = xw.data() + static_cast<std::size_t>(k) * plane;
    for (std::size_t n = 0; n < plane; ++n) xs[n] = cs[n] ? ys[n] * inv_cov[n] : 0.0;
  }

  std::vector<double> step(plane);
  Frame slice(h, w);
  for (int t = 0; t < params.outer_iters; ++t) {
    const auto ax = forward_model<double>(masks, xw);
    for (std::size_t n = 0; n < plane; ++n) step[n] = (ys[n] - ax[n]) * inv_cov[n];
    for (int k = 0; k < frames; ++k) {
      auto cs = masks.plane(k);
      double* xs = xw.data() + static_cast<std::size_t>(k) * plane;
      for (std::size_t n = 0; n < plane; ++n) {
        if (cs[n]) xs[n] += step[n];
      }
    }
    result.projection_residuals.push_back(residual_norm(y, forward_model<double>(masks, xw)));

    if (params.tv_weight > 0.0) {
      for (int k = 0; k < frames; ++k) {
        double* xs = xw.data() + static_cast<std::size_t>(k) * plane;
        auto fs = slice.samples();
        for (std::size_t n = 0; n < plane; ++n) fs[n] = static_cast<float>(xs[n]);
        const Frame denoised = tv_denoise(slice, params.tv_weight, params.tv_inner_iters);
        auto ds = denoised.samples();
        for (std::size_t n = 0; n < plane; ++n) xs[n] = ds[n];
      }
    }
    result.denoised_residuals.push_back(residual_norm(y, forward_model<double>(masks, xw)));
  }

  VideoCube x(h, w, frames);
  auto out = x.samples();
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = static_cast<float>(xw[n]);
  if (!all_finite(x.samples())) throw NumericalError("gap_tv_reconstruct produced non-finite samples");
  clamp_samples(x.samples(), 0.0f, 1.0f);
  result.video = std::move(x);
  return result;
}

VideoCube gap_tv_reconstruct(const Frame& y, const CodingCube& masks, const GapTvParams& params) {
  return gap_tv_reconstruct_detailed(y, masks, params).video;
}

}  // namespace khcv
