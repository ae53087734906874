#include "khcv/flow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "khcv/fusion.hpp"

namespace khcv {
namespace {

int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

// 5-tap binomial blur, replicated border, then keep every second sample.
Frame downsample(const Frame& in) {
  static constexpr std::array<float, 5> kTaps = {1.0f / 16, 4.0f / 16, 6.0f / 16, 4.0f / 16,
                                                 1.0f / 16};
  const int h = in.height();
  const int w = in.width();
  Frame horiz(h, w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      float s = 0.0f;
      for (int t = -2; t <= 2; ++t) s += kTaps[t + 2] * in(i, clampi(j + t, 0, w - 1));
      horiz(i, j) = s;
    }
  }
  const int oh = (h + 1) / 2;
  const int ow = (w + 1) / 2;
  Frame out(oh, ow);
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      float s = 0.0f;
      for (int t = -2; t <= 2; ++t) s += kTaps[t + 2] * horiz(clampi(2 * i + t, 0, h - 1), 2 * j);
      out(i, j) = s;
    }
  }
  return out;
}

// Coarse pixel (i, j) sits at fine pixel (2i, 2j).
FlowField upsample_flow(const FlowField& coarse, int height, int width) {
  FlowField fine(height, width);
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      float u, v;
      sample_flow(coarse, 0.5f * static_cast<float>(j), 0.5f * static_cast<float>(i), u, v);
      fine.u(i, j) = 2.0f * u;
      fine.v(i, j) = 2.0f * v;
    }
  }
  return fine;
}

FlowField downsample_flow(const FlowField& fine, int height, int width) {
  FlowField coarse(height, width);
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      const int fi = std::min(2 * i, fine.height() - 1);
      const int fj = std::min(2 * j, fine.width() - 1);
      coarse.u(i, j) = 0.5f * fine.u(fi, fj);
      coarse.v(i, j) = 0.5f * fine.v(fi, fj);
    }
  }
  return coarse;
}

// Horn-Schunck neighbourhood mean: 1/6 on edge neighbours, 1/12 on corners.
void local_mean(std::span<const float> f, int h, int w, std::span<float> out) {
  for (int i = 0; i < h; ++i) {
    const int up = std::max(i - 1, 0) * w;
    const int row = i * w;
    const int down = std::min(i + 1, h - 1) * w;
    for (int j = 0; j < w; ++j) {
      const int l = std::max(j - 1, 0);
      const int r = std::min(j + 1, w - 1);
      const float edge = f[up + j] + f[down + j] + f[row + l] + f[row + r];
      const float corner = f[up + l] + f[up + r] + f[down + l] + f[down + r];
      out[row + j] = edge * (1.0f / 6.0f) + corner * (1.0f / 12.0f);
    }
  }
}

void refine_level(const Frame& target, const Frame& source, FlowField& flow,
                  const FlowParams& params) {
  const int h = target.height();
  const int w = target.width();
  const std::size_t n_px = target.size();
  const float alpha2 = static_cast<float>(params.alpha * params.alpha);

  std::vector<float> ix(n_px), iy(n_px), it(n_px), u0(n_px), v0(n_px);
  std::vector<float> ubar(n_px), vbar(n_px);
  for (int warp_pass = 0; warp_pass < params.warps_per_level; ++warp_pass) {
    const Frame warped = warp(source, flow);
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        auto avg = [&](int a, int b) { return 0.5f * (target(a, b) + warped(a, b)); };
        const std::size_t n = static_cast<std::size_t>(i) * w + j;
        ix[n] = 0.5f * (avg(i, std::min(j + 1, w - 1)) - avg(i, std::max(j - 1, 0)));
        iy[n] = 0.5f * (avg(std::min(i + 1, h - 1), j) - avg(std::max(i - 1, 0), j));
        it[n] = warped(i, j) - target(i, j);
      }
    }
    std::ranges::copy(flow.u_samples(), u0.begin());
    std::ranges::copy(flow.v_samples(), v0.begin());
    auto u = flow.u_samples();
    auto v = flow.v_samples();
    for (int iter = 0; iter < params.iters_per_level; ++iter) {
      local_mean(u, h, w, ubar);
      local_mean(v, h, w, vbar);
      for (std::size_t n = 0; n < n_px; ++n) {
        const float t = (ix[n] * (ubar[n] - u0[n]) + iy[n] * (vbar[n] - v0[n]) + it[n]) /
                        (alpha2 + ix[n] * ix[n] + iy[n] * iy[n]);
        u[n] = ubar[n] - ix[n] * t;
        v[n] = vbar[n] - iy[n] * t;
      }
    }
  }
}

}  // namespace

void FlowParams::validate() const {
  if (pyramid_levels < 1) throw ArgumentError("pyramid_levels must be >= 1");
  if (!(alpha > 0.0)) throw ArgumentError("alpha must be > 0");
  if (iters_per_level < 1) throw ArgumentError("iters_per_level must be >= 1");
  if (warps_per_level < 1) throw ArgumentError("warps_per_level must be >= 1");
}

void sample_flow(const FlowField& flow, float x, float y, float& u, float& v) {
  const float max_x = static_cast<float>(flow.width() - 1);
  const float max_y = static_cast<float>(flow.height() - 1);
  x = std::isnan(x) ? 0.0f : std::clamp(x, 0.0f, max_x);
  y = std::isnan(y) ? 0.0f : std::clamp(y, 0.0f, max_y);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, flow.width() - 1);
  const int y1 = std::min(y0 + 1, flow.height() - 1);
  const float fx = x - static_cast<float>(x0);
  const float fy = y - static_cast<float>(y0);
  auto lerp2 = [&](auto get) {
    const float top = (1.0f - fx) * get(y0, x0) + fx * get(y0, x1);
    const float bottom = (1.0f - fx) * get(y1, x0) + fx * get(y1, x1);
    return (1.0f - fy) * top + fy * bottom;
  };
  u = lerp2([&](int i, int j) { return flow.u(i, j); });
  v = lerp2([&](int i, int j) { return flow.v(i, j); });
}

FlowField estimate_flow(const Frame& target, const Frame& source, const FlowParams& params) {
  return estimate_flow_from(target, source, FlowField(target.height(), target.width()), params);
}

FlowField estimate_flow_from(const Frame& target, const Frame& source,
                             const FlowField& initial, const FlowParams& params) {
  params.validate();
  require_same_shape(target, source, "estimate_flow");
  if (!initial.same_shape(target)) throw ShapeError("estimate_flow: initial flow shape mismatch");
  const int min_side = std::min(target.height(), target.width());
  const int needed = (1 << (params.pyramid_levels - 1)) * kMinCoarsestSide;
  if (min_side < needed) {
    throw ArgumentError("frames of " + std::to_string(target.height()) + "x" +
                        std::to_string(target.width()) + " are too small for " +
                        std::to_string(params.pyramid_levels) +
                        " pyramid levels (need a side of at least " + std::to_string(needed) +
                        " px); use fewer levels");
  }

  std::vector<Frame> targets{target};
  std::vector<Frame> sources{source};
  for (int l = 1; l < params.pyramid_levels; ++l) {
    targets.push_back(downsample(targets.back()));
    sources.push_back(downsample(sources.back()));
  }

  // Seed the coarsest level with the initial guess, scaled down.
  std::vector<FlowField> inits{initial};
  for (int l = 1; l < params.pyramid_levels; ++l) {
    inits.push_back(downsample_flow(inits.back(), targets[l].height(), targets[l].width()));
  }

  FlowField flow = inits.back();
  for (int l = params.pyramid_levels - 1; l >= 0; --l) {
    if (l != params.pyramid_levels - 1) {
      flow = upsample_flow(flow, targets[l].height(), targets[l].width());
    }
    refine_level(targets[l], sources[l], flow, params);
  }
  if (!all_finite(flow.u_samples()) || !all_finite(flow.v_samples())) {
    throw NumericalError("estimate_flow produced non-finite flow");
  }
  return flow;
}

FlowField compose_flows(std::span<const FlowField> steps) {
  if (steps.empty()) throw ArgumentError("compose_flows: empty flow list");
  for (const auto& f : steps) {
    if (!f.same_shape(steps.front())) throw ShapeError("compose_flows: shape mismatch");
  }
  FlowField total = steps.back();
  for (auto it = steps.rbegin() + 1; it != steps.rend(); ++it) {
    const FlowField& first = *it;
    FlowField next(first.height(), first.width());
    for (int i = 0; i < first.height(); ++i) {
      for (int j = 0; j < first.width(); ++j) {
        const float du = first.u(i, j);
        const float dv = first.v(i, j);
        float ru, rv;
        sample_flow(total, static_cast<float>(j) + du, static_cast<float>(i) + dv, ru, rv);
        next.u(i, j) = du + ru;
        next.v(i, j) = dv + rv;
      }
    }
    total = std::move(next);
  }
  return total;
}

namespace {

// Middlebury wheel: red-yellow 15, yellow-green 6, green-cyan 4,
// cyan-blue 11, blue-magenta 13, magenta-red 6.
const std::vector<std::array<float, 3>>& color_wheel() {
  static const std::vector<std::array<float, 3>> wheel = [] {
    std::vector<std::array<float, 3>> w;
    auto ramp = [&w](int n, auto fn) {
      for (int i = 0; i < n; ++i) w.push_back(fn(static_cast<float>(i) / static_cast<float>(n)));
    };
    ramp(15, [](float t) { return std::array<float, 3>{1.0f, t, 0.0f}; });
    ramp(6, [](float t) { return std::array<float, 3>{1.0f - t, 1.0f, 0.0f}; });
    ramp(4, [](float t) { return std::array<float, 3>{0.0f, 1.0f, t}; });
    ramp(11, [](float t) { return std::array<float, 3>{0.0f, 1.0f - t, 1.0f}; });
    ramp(13, [](float t) { return std::array<float, 3>{t, 0.0f, 1.0f}; });
    ramp(6, [](float t) { return std::array<float, 3>{1.0f, 0.0f, 1.0f - t}; });
    return w;
  }();
  return wheel;
}

}  // namespace

double flow_wheel_angle_degrees(float u, float v) {
  // The wheel starts at red for rightward motion, as in the Middlebury code.
  const double a = std::atan2(-static_cast<double>(v), -static_cast<double>(u)) / std::numbers::pi;
  double deg = (a + 1.0) * 180.0;
  if (deg >= 360.0) deg -= 360.0;
  return deg;
}

void flow_wheel_color(double position, float rgb[3]) {
  const auto& wheel = color_wheel();
  const int n = static_cast<int>(wheel.size());
  position -= std::floor(position);
  const double fk = position * n;
  const int k0 = static_cast<int>(std::floor(fk)) % n;
  const int k1 = (k0 + 1) % n;
  const float f = static_cast<float>(fk - std::floor(fk));
  for (int c = 0; c < 3; ++c) rgb[c] = (1.0f - f) * wheel[k0][c] + f * wheel[k1][c];
}

double percentile_magnitude(const FlowField& flow, double fraction) {
  std::vector<float> mags(flow.size());
  auto u = flow.u_samples();
  auto v = flow.v_samples();
  for (std::size_t n = 0; n < mags.size(); ++n) mags[n] = std::hypot(u[n], v[n]);
  const auto idx = static_cast<std::size_t>(
      std::clamp(fraction, 0.0, 1.0) * static_cast<double>(mags.size() - 1));
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(idx), mags.end());
  return mags[idx];
}

RgbImage flow_to_color(const FlowField& flow, std::optional<double> max_magnitude) {
  double scale = max_magnitude ? *max_magnitude : percentile_magnitude(flow, 0.99);
  if (max_magnitude && !(*max_magnitude > 0.0)) throw ArgumentError("max_magnitude must be > 0");
  if (!(scale > 0.0)) scale = 1.0;

  RgbImage out{flow.height(), flow.width(), std::vector<float>(flow.size() * 3)};
  for (int i = 0; i < flow.height(); ++i) {
    for (int j = 0; j < flow.width(); ++j) {
      const float u = flow.u(i, j);
      const float v = flow.v(i, j);
      float rgb[3];
      flow_wheel_color(flow_wheel_angle_degrees(u, v) / 360.0, rgb);
      const float sat =
          static_cast<float>(std::clamp(std::hypot(static_cast<double>(u), static_cast<double>(v)) / scale, 0.0, 1.0));
      for (int c = 0; c < 3; ++c) out.at(i, j, c) = 1.0f - sat * (1.0f - rgb[c]);
    }
  }
  return out;
}

}  // namespace khcv
