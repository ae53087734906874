// Simulated hybrid acquisition: binary coding masks, sensor trigger timing,
// coded long-exposure integration and uncoded short-exposure key frames.

#ifndef KHCV_CAPTURE_HPP_
#define KHCV_CAPTURE_HPP_

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "khcv/tensor.hpp"

namespace khcv {

// Stateless counter-based generator: every draw is a pure function of
// (seed, stream, counter), so results never depend on evaluation order.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t bits(std::uint64_t counter) const;
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform(std::uint64_t counter) const;
  // Standard normal via Box-Muller on the counter pair (2c, 2c + 1).
  double normal(std::uint64_t counter) const;

  static std::uint64_t mix(std::uint64_t z);

 private:
  std::uint64_t key_;
};

// Random streams used by the simulator.
enum class NoiseStream : std::uint64_t {
  kMasks = 0,
  kCompressive = 1,
  kKeyLeft = 2,
  kKeyRight = 3,
};

// All durations in microseconds.
struct TimingSchedule {
  std::int64_t t_x_us = 0;  // DMD pattern period, equivalent exposure
  std::int64_t t_y_us = 0;  // long (coded) exposure
  std::int64_t t_z_us = 0;  // key-frame exposure
  std::int64_t t_g_us = 0;  // readout gap between exposures
  int frames = 1;           // coding patterns per compressive frame (B)

  double gap_ratio() const {
    return static_cast<double>(t_g_us) / static_cast<double>(t_y_us);
  }
  // Capture-to-output frame count ratio of the alternating scheme.
  double compressive_ratio() const;

  bool operator==(const TimingSchedule&) const = default;
};

TimingSchedule build_schedule(std::int64_t t_x_us, int frames, std::int64_t t_g_us);

// Normalized gap when the readout gap is modeled as skipped whole frames.
double skipped_frame_gap_ratio(int gap_frames, int frames);

double compressive_ratio(int frames);

enum class ExposureKind { kKeyFrame, kCompressive };

struct Exposure {
  ExposureKind kind;
  std::int64_t start_us;
  std::int64_t duration_us;
};

// Sensor trigger sequence for `snapshots` compressive frames: key, gap,
// compressive, gap, key, ... ending with the closing key frame.
std::vector<Exposure> exposure_sequence(const TimingSchedule& schedule, int snapshots);

struct NoiseModel {
  enum class Kind { kNone, kAdditiveGaussian };

  Kind kind = Kind::kNone;
  double sigma = 0.0;
  std::uint64_t seed = 0;

  static NoiseModel none() { return {}; }
  static NoiseModel gaussian(double sigma, std::uint64_t seed) {
    return {Kind::kAdditiveGaussian, sigma, seed};
  }
};

struct HybridMeasurement {
  Frame y;
  Frame z_left;
  Frame z_right;
  CodingCube masks;
  TimingSchedule schedule;
  int gap_frames = 0;
};

CodingCube generate_masks(std::uint64_t seed, int height, int width, int frames,
                          double density = 0.5);

// y_ij = sum_k c_ijk * x_ijk + g_ij.
Frame encode(const VideoCube& x, const CodingCube& masks, const NoiseModel& noise);

// Adds the noise model's stream to a frame in place.
void add_noise(Frame& frame, const NoiseModel& noise, NoiseStream stream);

// Default position of the compressed block inside a longer scene: centered,
// so the same block is used whatever the frame gap.
int centered_block_start(int scene_frames, int frames);

// Key frames around the block [block_start, block_start + frames). With
// gap_frames skipped on each side, the left key is scene frame
// block_start - gap_frames - 1 and the right key is
// block_start + frames + gap_frames.
std::pair<Frame, Frame> sample_keyframes(const VideoCube& scene, int frames, int gap_frames,
                                         const NoiseModel& noise,
                                         std::optional<int> block_start = std::nullopt);

HybridMeasurement simulate_capture(const VideoCube& scene, const CodingCube& masks,
                                   const TimingSchedule& schedule, int gap_frames,
                                   const NoiseModel& noise,
                                   std::optional<int> block_start = std::nullopt);

}  // namespace khcv

#endif  // KHCV_CAPTURE_HPP_
