#include "khcv/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace khcv {
namespace {

std::vector<double> gaussian_taps() {
  std::vector<double> taps(kSsimWindow);
  const int r = kSsimWindow / 2;
  double sum = 0.0;
  for (int t = -r; t <= r; ++t) {
    taps[t + r] = std::exp(-(t * t) / (2.0 * kSsimSigma * kSsimSigma));
    sum += taps[t + r];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

// Separable valid-region filtering: output is (h - 10) x (w - 10).
std::vector<double> filter_valid(const std::vector<double>& in, int h, int w,
                                 const std::vector<double>& taps) {
  const int n = static_cast<int>(taps.size());
  const int ow = w - n + 1;
  const int oh = h - n + 1;
  std::vector<double> horiz(static_cast<std::size_t>(h) * ow);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < ow; ++j) {
      double s = 0.0;
      for (int t = 0; t < n; ++t) s += taps[t] * in[static_cast<std::size_t>(i) * w + j + t];
      horiz[static_cast<std::size_t>(i) * ow + j] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      double s = 0.0;
      for (int t = 0; t < n; ++t) s += taps[t] * horiz[static_cast<std::size_t>(i + t) * ow + j];
      out[static_cast<std::size_t>(i) * ow + j] = s;
    }
  }
  return out;
}

}  // namespace

double psnr(const Frame& a, const Frame& b, double peak) {
  require_same_shape(a, b, "psnr");
  if (!(peak > 0.0)) throw ArgumentError("psnr: peak must be > 0");
  double sse = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n) {
    const double d = static_cast<double>(a.samples()[n]) - b.samples()[n];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(a.size());
  if (mse == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Frame& a, const Frame& b, double peak) {
  require_same_shape(a, b, "ssim");
  if (!(peak > 0.0)) throw ArgumentError("ssim: peak must be > 0");
  if (std::min(a.height(), a.width()) < kSsimWindow) {
    throw ArgumentError("ssim: frames must be at least 11x11");
  }
  const int h = a.height();
  const int w = a.width();
  const std::size_t n = a.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t p = 0; p < n; ++p) {
    x[p] = a.samples()[p];
    y[p] = b.samples()[p];
    xx[p] = x[p] * x[p];
    yy[p] = y[p] * y[p];
    xy[p] = x[p] * y[p];
  }
  const auto taps = gaussian_taps();
  const auto mx = filter_valid(x, h, w, taps);
  const auto my = filter_valid(y, h, w, taps);
  const auto sxx = filter_valid(xx, h, w, taps);
  const auto syy = filter_valid(yy, h, w, taps);
  const auto sxy = filter_valid(xy, h, w, taps);

  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  double sum = 0.0;
  for (std::size_t p = 0; p < mx.size(); ++p) {
    const double var_x = sxx[p] - mx[p] * mx[p];
    const double var_y = syy[p] - my[p] * my[p];
    const double cov = sxy[p] - mx[p] * my[p];
    sum += ((2.0 * mx[p] * my[p] + c1) * (2.0 * cov + c2)) /
           ((mx[p] * mx[p] + my[p] * my[p] + c1) * (var_x + var_y + c2));
  }
  return sum / static_cast<double>(mx.size());
}

double l1_distance(const Frame& a, const Frame& b) {
  require_same_shape(a, b, "l1_distance");
  double sum = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p) {
    sum += std::abs(static_cast<double>(a.samples()[p]) - b.samples()[p]);
  }
  return sum / static_cast<double>(a.size());
}

double l1_distance(const VideoCube& a, const VideoCube& b) {
  if (!a.same_shape(b)) throw ShapeError("l1_distance: cube shapes differ");
  double sum = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p) {
    sum += std::abs(static_cast<double>(a.samples()[p]) - b.samples()[p]);
  }
  return sum / static_cast<double>(a.size());
}

double mean_epe(const FlowField& f, const FlowField& g, const Frame* mask) {
  if (!f.same_shape(g)) throw ShapeError("mean_epe: flow shapes differ");
  if (mask != nullptr && !f.same_shape(*mask)) throw ShapeError("mean_epe: mask shape differs");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < f.size(); ++p) {
    if (mask != nullptr && mask->samples()[p] == 0.0f) continue;
    const double du = static_cast<double>(f.u_samples()[p]) - g.u_samples()[p];
    const double dv = static_cast<double>(f.v_samples()[p]) - g.v_samples()[p];
    sum += std::sqrt(du * du + dv * dv);
    ++count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

double mean_flow_magnitude(const FlowField& f) {
  return mean_epe(f, FlowField(f.height(), f.width()));
}

void MetricReport::finalize() {
  mean = FrameScore{};
  if (per_frame.empty()) return;
  for (const auto& s : per_frame) {
    mean.psnr_db += s.psnr_db;
    mean.ssim += s.ssim;
    mean.l1 += s.l1;
  }
  const double n = static_cast<double>(per_frame.size());
  mean.psnr_db /= n;
  mean.ssim /= n;
  mean.l1 /= n;
}

MetricReport evaluate_video(const VideoCube& estimate, const VideoCube& truth,
                            const std::string& label, double peak) {
  if (!estimate.same_shape(truth)) throw ShapeError("evaluate_video: cube shapes differ");
  MetricReport report{label, peak, {}, {}};
  for (int k = 0; k < truth.frames(); ++k) {
    const Frame e = extract_frame(estimate, k);
    const Frame t = extract_frame(truth, k);
    report.per_frame.push_back({k + 1, psnr(e, t, peak), ssim(e, t, peak), l1_distance(e, t)});
  }
  report.finalize();
  return report;
}

MetricReport evaluate_frame(const Frame& estimate, const Frame& truth, const std::string& label,
                            double peak) {
  MetricReport report{label, peak, {}, {}};
  report.per_frame.push_back(
      {1, psnr(estimate, truth, peak), ssim(estimate, truth, peak), l1_distance(estimate, truth)});
  report.finalize();
  return report;
}

nlohmann::json psnr_to_json(double psnr_db) {
  if (std::isinf(psnr_db) && psnr_db > 0) return "inf";
  return psnr_db;
}

nlohmann::json score_to_json(const FrameScore& s, bool with_index) {
  nlohmann::json j;
  if (with_index) j["k"] = s.k;
  j["psnr_db"] = psnr_to_json(s.psnr_db);
  j["ssim"] = s.ssim;
  j["l1"] = s.l1;
  return j;
}

nlohmann::json report_to_json(const MetricReport& report) {
  nlohmann::json j;
  j["label"] = report.label;
  j["peak"] = report.peak;
  j["per_frame"] = nlohmann::json::array();
  for (const auto& s : report.per_frame) j["per_frame"].push_back(score_to_json(s));
  j["mean"] = score_to_json(report.mean, false);
  j["lpips"] = "unavailable";
  return j;
}

std::string format_number(double value) {
  if (std::isinf(value) && value > 0) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", value);
  return buf;
}

std::string report_to_csv(const MetricReport& report) {
  std::ostringstream out;
  out << "k,psnr_db,ssim,l1\n";
  for (const auto& s : report.per_frame) {
    out << s.k << ',' << format_number(s.psnr_db) << ',' << format_number(s.ssim) << ','
        << format_number(s.l1) << '\n';
  }
  out << "mean," << format_number(report.mean.psnr_db) << ',' << format_number(report.mean.ssim)
      << ',' << format_number(report.mean.l1) << '\n';
  return out.str();
}

}  // namespace khcv
