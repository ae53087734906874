// Key-frame fusion: each intermediate frame is combined with the two
// surrounding key frames after flow-based alignment.
//
// Per frame k the pipeline is:
//   1. scale both keys to the intermediate frame's mean brightness
//   2. flows from the intermediate frame to each key (direct or chained)
//   3. residual flow refinement at full resolution
//   4. backward warp of both keys
//   5. visibility map from smoothed photometric errors
//   6. time-weighted blend with tau = k / (B + 2)
//   7. per-pixel fallback to the intermediate frame where both warps fail

#ifndef KHCV_FUSION_HPP_
#define KHCV_FUSION_HPP_

#include <optional>
#include <span>
#include <vector>

#include "khcv/capture.hpp"
#include "khcv/flow.hpp"
#include "khcv/tensor.hpp"

namespace khcv {

// Weight of the left warped key per pixel; 1 - v weights the right one.
struct VisibleMap {
  Frame values;
};

inline FlowParams default_fusion_flow_params() {
  FlowParams p;
  p.alpha = 0.5;
  return p;
}

struct FusionParams {
  double beta = 20.0;             // logistic sharpness of the visibility map
  int error_smooth_radius = 1;    // box radius for photometric errors
  double epsilon_blend = 1e-6;
  std::optional<double> fallback_threshold = 0.15;  // nullopt disables
  bool normalize_keys = true;
  bool use_step_flows = false;    // chain frame-to-frame flows
  FlowParams flow_params = default_fusion_flow_params();

  void validate() const;
};

// out(p) = image(p + f(p)), bilinear, replicated border.
Frame warp(const Frame& image, const FlowField& f);

// F' = f0 + dF, dF re-estimated at full resolution only between the target
// and the key warped by f0. Falls back to f0 when the correction raises the
// mean photometric error.
FlowField refine_flow(const Frame& target, const Frame& key, const FlowField& f0,
                      const FlowParams& params);

// Mean |warp(key, f) - target| over the central crop that drops `margin`
// pixels on every side.
double photometric_error(const Frame& target, const Frame& key, const FlowField& f, int margin = 0);

// Box mean of |a - b| with the given radius, replicated border.
Frame smoothed_abs_error(const Frame& a, const Frame& b, int radius);

// v = logistic(beta * (e_right - e_left)).
VisibleMap visibility_map(const Frame& w_left, const Frame& w_right, const Frame& target,
                          const FusionParams& params);

float logistic(float x);

Frame blend(const Frame& w_left, const Frame& w_right, const VisibleMap& v, double tau,
            const FusionParams& params);

// Rescales image so its mean matches reference, clamped to [0, 4]. Frames
// with (near) zero mean are returned unchanged.
Frame normalize_brightness(const Frame& image, const Frame& reference);

double time_factor(int k, int frames);

// Chained flows for one compressive block. to_left[k-1] holds
// F_{k -> k-1} (to_left[0] is F_{1 -> left key}); to_right[k-1] holds
// F_{k -> k+1} (to_right[B-1] is F_{B -> right key}).
struct StepFlows {
  std::vector<FlowField> to_left;
  std::vector<FlowField> to_right;

  FlowField chain_to_left(int k) const;
  FlowField chain_to_right(int k) const;
};

StepFlows compute_step_flows(const Frame& z_left, const Frame& z_right, const VideoCube& x_mid,
                             const FlowParams& params);

// Everything computed while fusing one frame, for inspection and dumps.
struct FusionTrace {
  FlowField flow_left;
  FlowField flow_right;
  FlowField refined_left;
  FlowField refined_right;
  Frame warped_left;
  Frame warped_right;
  VisibleMap visibility;
  Frame fallback_mask;  // 1 where the intermediate frame was kept
  double tau = 0.0;
};

Frame fuse_frame(const Frame& z_left, const Frame& z_right, const Frame& x_mid_k, int k,
                 int frames, const FusionParams& params, const StepFlows* step_flows = nullptr,
                 FusionTrace* trace = nullptr);

VideoCube fuse_video(const HybridMeasurement& measurement, const VideoCube& x_mid,
                     const FusionParams& params, std::vector<FusionTrace>* traces = nullptr);

}  // namespace khcv

#endif  // KHCV_FUSION_HPP_
