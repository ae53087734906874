// Dense optical flow: coarse-to-fine Horn-Schunck with inter-level warping,
// flow chaining and Middlebury color-wheel visualization.
//
// Flow direction: estimate_flow(target, source) returns F such that
// source(p + F(p)) ~ target(p), i.e. F backward-warps the source onto the
// target's pixel grid.

#ifndef KHCV_FLOW_HPP_
#define KHCV_FLOW_HPP_

#include <optional>
#include <span>

#include "khcv/tensor.hpp"

namespace khcv {

struct FlowParams {
  int pyramid_levels = 3;
  double alpha = 0.05;  // smoothness weight on the [0,1] intensity scale
  int iters_per_level = 100;
  int warps_per_level = 3;

  void validate() const;
};

// Smallest frame side the coarsest pyramid level may have.
inline constexpr int kMinCoarsestSide = 8;

FlowField estimate_flow(const Frame& target, const Frame& source, const FlowParams& params = {});

// Runs the solver starting from `initial` instead of zero flow.
FlowField estimate_flow_from(const Frame& target, const Frame& source,
                             const FlowField& initial, const FlowParams& params);

// Chains per-step flows: total(p) = F1(p) + rest(p + F1(p)).
FlowField compose_flows(std::span<const FlowField> steps);

// Bilinear flow-vector lookup at fractional coordinates (replicated border).
void sample_flow(const FlowField& flow, float x, float y, float& u, float& v);

// Position of direction atan2(v, u) on the color wheel, in degrees [0, 360).
double flow_wheel_angle_degrees(float u, float v);

// Hue encodes direction, saturation |F| / max_magnitude. When max_magnitude
// is not given the 99th-percentile magnitude is used.
RgbImage flow_to_color(const FlowField& flow, std::optional<double> max_magnitude = std::nullopt);

// Middlebury color wheel entry at a wheel position in [0, 1).
void flow_wheel_color(double position, float rgb[3]);

double percentile_magnitude(const FlowField& flow, double fraction);

}  // namespace khcv

#endif  // KHCV_FLOW_HPP_
