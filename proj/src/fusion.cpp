#include "khcv/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace khcv {
namespace {

constexpr double kBrightnessEpsilon = 1e-8;
constexpr float kBrightnessCeiling = 4.0f;

int evaluation_margin(const Frame& f) { return std::min(f.height(), f.width()) / 10; }

FlowField add_flows(const FlowField& a, const FlowField& b) {
  FlowField out = a;
  auto u = out.u_samples();
  auto v = out.v_samples();
  auto bu = b.u_samples();
  auto bv = b.v_samples();
  for (std::size_t n = 0; n < u.size(); ++n) {
    u[n] += bu[n];
    v[n] += bv[n];
  }
  return out;
}

}  // namespace

void FusionParams::validate() const {
  if (!(beta > 0.0)) throw ArgumentError("beta must be > 0");
  if (!(epsilon_blend > 0.0)) throw ArgumentError("epsilon_blend must be > 0");
  if (error_smooth_radius < 0) throw ArgumentError("error_smooth_radius must be >= 0");
  flow_params.validate();
}

Frame warp(const Frame& image, const FlowField& f) {
  if (!f.same_shape(image)) throw ShapeError("warp: flow and image shapes differ");
  Frame out(image.height(), image.width());
  for (int i = 0; i < image.height(); ++i) {
    for (int j = 0; j < image.width(); ++j) {
      out(i, j) = sample_bilinear(image, static_cast<float>(j) + f.u(i, j),
                                  static_cast<float>(i) + f.v(i, j));
    }
  }
  return out;
}

double photometric_error(const Frame& target, const Frame& key, const FlowField& f, int margin) {
  require_same_shape(target, key, "photometric_error");
  const Frame warped = warp(key, f);
  double sum = 0.0;
  std::size_t count = 0;
  for (int i = margin; i < target.height() - margin; ++i) {
    for (int j = margin; j < target.width() - margin; ++j) {
      sum += std::abs(static_cast<double>(warped(i, j)) - target(i, j));
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

FlowField refine_flow(const Frame& target, const Frame& key, const FlowField& f0,
                      const FlowParams& params) {
  require_same_shape(target, key, "refine_flow");
  if (!f0.same_shape(target)) throw ShapeError("refine_flow: flow shape mismatch");
  FlowParams finest = params;
  finest.pyramid_levels = 1;
  const Frame warped = warp(key, f0);
  const FlowField delta = estimate_flow(target, warped, finest);
  FlowField refined = add_flows(f0, delta);

  const int margin = evaluation_margin(target);
  if (photometric_error(target, key, refined, margin) > photometric_error(target, key, f0, margin)) {
    return f0;
  }
  return refined;
}

Frame smoothed_abs_error(const Frame& a, const Frame& b, int radius) {
  require_same_shape(a, b, "smoothed_abs_error");
  const int h = a.height();
  const int w = a.width();
  Frame diff(h, w);
  for (std::size_t n = 0; n < diff.size(); ++n) {
    diff.samples()[n] = std::abs(a.samples()[n] - b.samples()[n]);
  }
  if (radius == 0) return diff;
  const float norm = 1.0f / static_cast<float>(2 * radius + 1);
  Frame horiz(h, w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      float s = 0.0f;
      for (int t = -radius; t <= radius; ++t) s += diff(i, std::clamp(j + t, 0, w - 1));
      horiz(i, j) = s * norm;
    }
  }
  Frame out(h, w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      float s = 0.0f;
      for (int t = -radius; t <= radius; ++t) s += horiz(std::clamp(i + t, 0, h - 1), j);
      out(i, j) = s * norm;
    }
  }
  return out;
}

float logistic(float x) {
  // Negative arguments are mirrored so that logistic(-x) == 1 - logistic(x)
  // holds bit-exactly.
  if (x < 0.0f) return 1.0f - logistic(-x);
  return 1.0f / (1.0f + std::exp(-x));
}

VisibleMap visibility_map(const Frame& w_left, const Frame& w_right, const Frame& target,
                          const FusionParams& params) {
  if (!(params.beta > 0.0)) throw ArgumentError("beta must be > 0");
  require_same_shape(w_left, target, "visibility_map");
  require_same_shape(w_right, target, "visibility_map");
  const Frame e_left = smoothed_abs_error(w_left, target, params.error_smooth_radius);
  const Frame e_right = smoothed_abs_error(w_right, target, params.error_smooth_radius);
  VisibleMap v{Frame(target.height(), target.width())};
  const float beta = static_cast<float>(params.beta);
  for (std::size_t n = 0; n < target.size(); ++n) {
    v.values.samples()[n] = logistic(beta * (e_right.samples()[n] - e_left.samples()[n]));
  }
  return v;
}

Frame blend(const Frame& w_left, const Frame& w_right, const VisibleMap& v, double tau,
            const FusionParams& params) {
  if (!(tau > 0.0 && tau < 1.0)) throw ArgumentError("tau must lie in (0, 1)");
  require_same_shape(w_left, w_right, "blend");
  require_same_shape(w_left, v.values, "blend");
  Frame out(w_left.height(), w_left.width());
  for (std::size_t n = 0; n < out.size(); ++n) {
    const double vis = v.values.samples()[n];
    const double a = (1.0 - tau) * vis;
    const double b = tau * (1.0 - vis);
    out.samples()[n] = static_cast<float>((a * w_left.samples()[n] + b * w_right.samples()[n]) /
                                          (a + b + params.epsilon_blend));
  }
  return out;
}

Frame normalize_brightness(const Frame& image, const Frame& reference) {
  require_same_shape(image, reference, "normalize_brightness");
  const double image_mean = mean_of(image.samples());
  const double reference_mean = mean_of(reference.samples());
  if (!(image_mean > kBrightnessEpsilon) || !(reference_mean > 0.0)) return image;
  const double gain = reference_mean / image_mean;
  Frame out = image;
  for (float& s : out.samples()) {
    s = std::clamp(static_cast<float>(s * gain), 0.0f, kBrightnessCeiling);
  }
  return out;
}

double time_factor(int k, int frames) {
  if (k < 1 || k > frames) throw ArgumentError("frame index k must lie in [1, B]");
  return static_cast<double>(k) / static_cast<double>(frames + 2);
}

FlowField StepFlows::chain_to_left(int k) const {
  if (k < 1 || k > static_cast<int>(to_left.size())) throw ArgumentError("chain_to_left: bad k");
  std::vector<FlowField> chain;
  for (int s = k - 1; s >= 0; --s) chain.push_back(to_left[s]);
  return compose_flows(chain);
}

FlowField StepFlows::chain_to_right(int k) const {
  if (k < 1 || k > static_cast<int>(to_right.size())) throw ArgumentError("chain_to_right: bad k");
  std::vector<FlowField> chain(to_right.begin() + (k - 1), to_right.end());
  return compose_flows(chain);
}

StepFlows compute_step_flows(const Frame& z_left, const Frame& z_right, const VideoCube& x_mid,
                             const FlowParams& params) {
  if (!x_mid.same_plane_shape(z_left) || !x_mid.same_plane_shape(z_right)) {
    throw ShapeError("compute_step_flows: shape mismatch");
  }
  const int frames = x_mid.frames();
  std::vector<Frame> mids;
  for (int k = 0; k < frames; ++k) mids.push_back(extract_frame(x_mid, k));
  StepFlows steps;
  for (int k = 0; k < frames; ++k) {
    const Frame& previous = k == 0 ? z_left : mids[k - 1];
    steps.to_left.push_back(estimate_flow(mids[k], previous, params));
  }
  for (int k = 0; k < frames; ++k) {
    const Frame& next = k == frames - 1 ? z_right : mids[k + 1];
    steps.to_right.push_back(estimate_flow(mids[k], next, params));
  }
  return steps;
}

Frame fuse_frame(const Frame& z_left, const Frame& z_right, const Frame& x_mid_k, int k,
                 int frames, const FusionParams& params, const StepFlows* step_flows,
                 FusionTrace* trace) {
  params.validate();
  require_same_shape(z_left, x_mid_k, "fuse_frame");
  require_same_shape(z_right, x_mid_k, "fuse_frame");
  const double tau = time_factor(k, frames);

  const Frame key_left = params.normalize_keys ? normalize_brightness(z_left, x_mid_k) : z_left;
  const Frame key_right = params.normalize_keys ? normalize_brightness(z_right, x_mid_k) : z_right;

  FlowField flow_left, flow_right;
  if (step_flows != nullptr) {
    flow_left = step_flows->chain_to_left(k);
    flow_right = step_flows->chain_to_right(k);
  } else {
    flow_left = estimate_flow(x_mid_k, key_left, params.flow_params);
    flow_right = estimate_flow(x_mid_k, key_right, params.flow_params);
  }
  FlowField refined_left = refine_flow(x_mid_k, key_left, flow_left, params.flow_params);
  FlowField refined_right = refine_flow(x_mid_k, key_right, flow_right, params.flow_params);

  Frame warped_left = warp(key_left, refined_left);
  Frame warped_right = warp(key_right, refined_right);
  VisibleMap visibility = visibility_map(warped_left, warped_right, x_mid_k, params);
  Frame out = blend(warped_left, warped_right, visibility, tau, params);

  Frame fallback(out.height(), out.width());
  if (params.fallback_threshold) {
    const Frame e_left = smoothed_abs_error(warped_left, x_mid_k, params.error_smooth_radius);
    const Frame e_right = smoothed_abs_error(warped_right, x_mid_k, params.error_smooth_radius);
    const float threshold = static_cast<float>(*params.fallback_threshold);
    for (std::size_t n = 0; n < out.size(); ++n) {
      if (std::min(e_left.samples()[n], e_right.samples()[n]) > threshold) {
        out.samples()[n] = x_mid_k.samples()[n];
        fallback.samples()[n] = 1.0f;
      }
    }
  }
  if (!all_finite(out.samples())) throw NumericalError("fuse_frame produced non-finite samples");
  clamp_samples(out.samples(), 0.0f, 1.0f);

  if (trace != nullptr) {
    trace->flow_left = std::move(flow_left);
    trace->flow_right = std::move(flow_right);
    trace->refined_left = std::move(refined_left);
    trace->refined_right = std::move(refined_right);
    trace->warped_left = std::move(warped_left);
    trace->warped_right = std::move(warped_right);
    trace->visibility = std::move(visibility);
    trace->fallback_mask = std::move(fallback);
    trace->tau = tau;
  }
  return out;
}

VideoCube fuse_video(const HybridMeasurement& measurement, const VideoCube& x_mid,
                     const FusionParams& params, std::vector<FusionTrace>* traces) {
  params.validate();
  const int frames = measurement.schedule.frames;
  if (x_mid.frames() != frames) {
    throw ShapeError("fuse_video: intermediate video has " + std::to_string(x_mid.frames()) +
                     " frames, schedule expects B=" + std::to_string(frames));
  }
  std::optional<StepFlows> steps;
  if (params.use_step_flows) {
    // The chain is shared by all k, so keys are matched to the block mean.
    const Frame mean_frame(x_mid.height(), x_mid.width(),
                           static_cast<float>(mean_of(x_mid.samples())));
    const Frame zl = params.normalize_keys ? normalize_brightness(measurement.z_left, mean_frame)
                                           : measurement.z_left;
    const Frame zr = params.normalize_keys ? normalize_brightness(measurement.z_right, mean_frame)
                                           : measurement.z_right;
    steps = compute_step_flows(zl, zr, x_mid, params.flow_params);
  }
  if (traces != nullptr) traces->assign(static_cast<std::size_t>(frames), FusionTrace{});

  VideoCube out(x_mid.height(), x_mid.width(), frames);
  for (int k = 1; k <= frames; ++k) {
    FusionTrace* trace = traces != nullptr ? &(*traces)[static_cast<std::size_t>(k - 1)] : nullptr;
    const Frame fused = fuse_frame(measurement.z_left, measurement.z_right,
                                   extract_frame(x_mid, k - 1), k, frames, params,
                                   steps ? &*steps : nullptr, trace);
    assign_frame(out, k - 1, fused);
  }
  return out;
}

}  // namespace khcv
