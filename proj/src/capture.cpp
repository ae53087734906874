#include "khcv/capture.hpp"

#include <cmath>
#include <numbers>
#include <tuple>
#include <string>

namespace khcv {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

void require_block(const VideoCube& scene, int frames, int gap_frames, int block_start) {
  if (frames < 1) throw ArgumentError("B must be >= 1");
  if (gap_frames < 0) throw ArgumentError("gap_frames must be >= 0");
  const int left = block_start - gap_frames - 1;
  const int right = block_start + frames + gap_frames;
  if (left < 0 || right >= scene.frames()) {
    throw ShapeError("scene of " + std::to_string(scene.frames()) +
                     " frames is too short: B=" + std::to_string(frames) +
                     " with gap " + std::to_string(gap_frames) + " needs at least " +
                     std::to_string(frames + 2 + 2 * gap_frames) + " frames");
  }
}

}  // namespace

std::uint64_t CounterRng::mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix(seed + kGolden) ^ mix(stream * kGolden + 0xD1B54A32D192ED03ull)) {}

std::uint64_t CounterRng::bits(std::uint64_t counter) const {
  return mix(key_ + (counter + 1) * kGolden);
}

double CounterRng::uniform(std::uint64_t counter) const {
  return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t counter) const {
  // 1 - U keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform(2 * counter);
  const double u2 = uniform(2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double TimingSchedule::compressive_ratio() const { return khcv::compressive_ratio(frames); }

TimingSchedule build_schedule(std::int64_t t_x_us, int frames, std::int64_t t_g_us) {
  if (t_x_us <= 0) throw ArgumentError("t_x must be positive");
  if (frames < 1) throw ArgumentError("B must be >= 1");
  if (t_g_us < 0) throw ArgumentError("t_g must be >= 0");
  TimingSchedule s;
  s.t_x_us = t_x_us;
  s.t_y_us = t_x_us * frames;
  s.t_z_us = t_x_us;
  s.t_g_us = t_g_us;
  s.frames = frames;
  return s;
}

double skipped_frame_gap_ratio(int gap_frames, int frames) {
  if (frames < 1) throw ArgumentError("B must be >= 1");
  return static_cast<double>(gap_frames) / static_cast<double>(frames);
}

double compressive_ratio(int frames) {
  if (frames < 1) throw ArgumentError("B must be >= 1");
  return 2.0 / static_cast<double>(frames + 1);
}

std::vector<Exposure> exposure_sequence(const TimingSchedule& schedule, int snapshots) {
  std::vector<Exposure> out;
  std::int64_t t = 0;
  for (int s = 0; s < snapshots; ++s) {
    out.push_back({ExposureKind::kKeyFrame, t, schedule.t_z_us});
    t += schedule.t_z_us + schedule.t_g_us;
    out.push_back({ExposureKind::kCompressive, t, schedule.t_y_us});
    t += schedule.t_y_us + schedule.t_g_us;
  }
  out.push_back({ExposureKind::kKeyFrame, t, schedule.t_z_us});
  return out;
}

CodingCube generate_masks(std::uint64_t seed, int height, int width, int frames,
                          double density) {
  if (height <= 0 || width <= 0 || frames <= 0) {
    throw ArgumentError("mask dimensions must be positive");
  }
  if (!(density > 0.0 && density <= 1.0)) throw ArgumentError("mask density must be in (0, 1]");
  CodingCube masks(height, width, frames);
  const CounterRng rng(seed, static_cast<std::uint64_t>(NoiseStream::kMasks));
  auto samples = masks.samples();
  for (std::size_t n = 0; n < samples.size(); ++n) {
    samples[n] = rng.uniform(n) < density ? 1 : 0;
  }
  return masks;
}

void add_noise(Frame& frame, const NoiseModel& noise, NoiseStream stream) {
  if (noise.sigma < 0.0) throw ArgumentError("noise sigma must be >= 0");
  if (noise.kind == NoiseModel::Kind::kNone || noise.sigma == 0.0) return;
  const CounterRng rng(noise.seed, static_cast<std::uint64_t>(stream));
  auto samples = frame.samples();
  for (std::size_t n = 0; n < samples.size(); ++n) {
    samples[n] += static_cast<float>(noise.sigma * rng.normal(n));
  }
}

Frame encode(const VideoCube& x, const CodingCube& masks, const NoiseModel& noise) {
  if (!x.same_shape(masks)) throw ShapeError("encode: video and mask shapes differ");
  const std::size_t plane = x.plane_size();
  std::vector<double> acc(plane, 0.0);
  for (int k = 0; k < x.frames(); ++k) {
    auto xs = x.plane(k);
    auto cs = masks.plane(k);
    for (std::size_t n = 0; n < plane; ++n) {
      if (cs[n]) acc[n] += xs[n];
    }
  }
  Frame y(x.height(), x.width());
  auto ys = y.samples();
  for (std::size_t n = 0; n < plane; ++n) ys[n] = static_cast<float>(acc[n]);
  add_noise(y, noise, NoiseStream::kCompressive);
  return y;
}

int centered_block_start(int scene_frames, int frames) {
  return (scene_frames - frames) / 2;
}

std::pair<Frame, Frame> sample_keyframes(const VideoCube& scene, int frames, int gap_frames,
                                         const NoiseModel& noise,
                                         std::optional<int> block_start) {
  const int start = block_start.value_or(centered_block_start(scene.frames(), frames));
  require_block(scene, frames, gap_frames, start);
  Frame left = extract_frame(scene, start - gap_frames - 1);
  Frame right = extract_frame(scene, start + frames + gap_frames);
  add_noise(left, noise, NoiseStream::kKeyLeft);
  add_noise(right, noise, NoiseStream::kKeyRight);
  return {std::move(left), std::move(right)};
}

HybridMeasurement simulate_capture(const VideoCube& scene, const CodingCube& masks,
                                   const TimingSchedule& schedule, int gap_frames,
                                   const NoiseModel& noise, std::optional<int> block_start) {
  if (masks.frames() != schedule.frames) {
    throw ShapeError("mask count " + std::to_string(masks.frames()) +
                     " differs from schedule B=" + std::to_string(schedule.frames));
  }
  const int start = block_start.value_or(centered_block_start(scene.frames(), schedule.frames));
  require_block(scene, schedule.frames, gap_frames, start);
  HybridMeasurement m;
  m.y = encode(slice_frames(scene, start, schedule.frames), masks, noise);
  std::tie(m.z_left, m.z_right) = sample_keyframes(scene, schedule.frames, gap_frames, noise, start);
  m.masks = masks;
  m.schedule = schedule;
  m.gap_frames = gap_frames;
  return m;
}

}  // namespace khcv
