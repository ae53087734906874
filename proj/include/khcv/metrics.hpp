// Image and flow quality metrics.

#ifndef KHCV_METRICS_HPP_
#define KHCV_METRICS_HPP_

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "khcv/tensor.hpp"

namespace khcv {

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

// 10 log10(peak^2 / MSE); identical inputs give +infinity.
double psnr(const Frame& a, const Frame& b, double peak = 1.0);

// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
// evaluated only where the window fits inside the frame.
double ssim(const Frame& a, const Frame& b, double peak = 1.0);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

double l1_distance(const Frame& a, const Frame& b);
double l1_distance(const VideoCube& a, const VideoCube& b);

// Mean endpoint error, optionally restricted to pixels where mask != 0.
double mean_epe(const FlowField& f, const FlowField& g, const Frame* mask = nullptr);

double mean_flow_magnitude(const FlowField& f);

struct FrameScore {
  int k = 0;  // 1-based frame index within the block
  double psnr_db = 0.0;
  double ssim = 0.0;
  double l1 = 0.0;
};

struct MetricReport {
  std::string label;
  double peak = 1.0;
  std::vector<FrameScore> per_frame;
  FrameScore mean;  // k = 0

  // Arithmetic means; an infinite PSNR entry makes the mean infinite.
  void finalize();
};

MetricReport evaluate_video(const VideoCube& estimate, const VideoCube& truth,
                            const std::string& label, double peak = 1.0);
MetricReport evaluate_frame(const Frame& estimate, const Frame& truth, const std::string& label,
                            double peak = 1.0);

// PSNR values are written as the string "inf" when infinite.
nlohmann::json psnr_to_json(double psnr_db);
nlohmann::json score_to_json(const FrameScore& s, bool with_index = true);
nlohmann::json report_to_json(const MetricReport& report);
// One row per frame, final row "mean"; columns k,psnr_db,ssim,l1.
std::string report_to_csv(const MetricReport& report);
std::string format_number(double value);

}  // namespace khcv

#endif  // KHCV_METRICS_HPP_
