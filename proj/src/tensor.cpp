#include "khcv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace khcv {
namespace {

std::size_t checked_count(int height, int width, int frames) {
  if (height <= 0 || width <= 0 || frames <= 0) {
    throw ShapeError("dimensions must be positive, got " + std::to_string(height) +
                     "x" + std::to_string(width) + "x" + std::to_string(frames));
  }
  return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
         static_cast<std::size_t>(frames);
}

void require_count(std::size_t expected, std::size_t actual, const char* what) {
  if (expected != actual) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(expected) +
                     " samples, got " + std::to_string(actual));
  }
}

}  // namespace

Frame::Frame(int height, int width, float fill)
    : height_(height),
      width_(width),
      samples_(checked_count(height, width, 1), fill) {}

Frame::Frame(int height, int width, std::vector<float> samples)
    : height_(height), width_(width), samples_(std::move(samples)) {
  require_count(checked_count(height, width, 1), samples_.size(), "Frame");
}

template <typename T>
BasicCube<T>::BasicCube(int height, int width, int frames, T fill)
    : height_(height),
      width_(width),
      frames_(frames),
      samples_(checked_count(height, width, frames), fill) {
  validate();
}

template <typename T>
BasicCube<T>::BasicCube(int height, int width, int frames, std::vector<T> samples)
    : height_(height), width_(width), frames_(frames), samples_(std::move(samples)) {
  require_count(checked_count(height, width, frames), samples_.size(), "cube");
  validate();
}

template <typename T>
void BasicCube<T>::validate() const {
  if constexpr (std::is_same_v<T, std::uint8_t>) {
    for (auto s : samples_) {
      if (s > 1) throw ShapeError("coding cube samples must be 0 or 1");
    }
  }
}

template class BasicCube<float>;
template class BasicCube<std::uint8_t>;

Frame extract_frame(const VideoCube& cube, int k) {
  if (k < 0 || k >= cube.frames()) {
    throw ArgumentError("frame index " + std::to_string(k) + " out of range");
  }
  auto plane = cube.plane(k);
  return Frame(cube.height(), cube.width(), std::vector<float>(plane.begin(), plane.end()));
}

void assign_frame(VideoCube& cube, int k, const Frame& frame) {
  if (!cube.same_plane_shape(frame)) throw ShapeError("assign_frame: shape mismatch");
  if (k < 0 || k >= cube.frames()) {
    throw ArgumentError("frame index " + std::to_string(k) + " out of range");
  }
  std::ranges::copy(frame.samples(), cube.plane(k).begin());
}

VideoCube stack_frames(std::span<const Frame> frames) {
  if (frames.empty()) throw ShapeError("stack_frames: no frames");
  VideoCube cube(frames[0].height(), frames[0].width(), static_cast<int>(frames.size()));
  for (std::size_t k = 0; k < frames.size(); ++k) {
    assign_frame(cube, static_cast<int>(k), frames[k]);
  }
  return cube;
}

VideoCube slice_frames(const VideoCube& cube, int first, int count) {
  if (first < 0 || count <= 0 || first + count > cube.frames()) {
    throw ArgumentError("slice_frames: range [" + std::to_string(first) + ", " +
                        std::to_string(first + count) + ") outside cube of " +
                        std::to_string(cube.frames()) + " frames");
  }
  auto begin = cube.samples().begin() + static_cast<std::ptrdiff_t>(first * cube.plane_size());
  auto end = begin + static_cast<std::ptrdiff_t>(count * cube.plane_size());
  return VideoCube(cube.height(), cube.width(), count, std::vector<float>(begin, end));
}

FlowField::FlowField(int height, int width, float u, float v)
    : height_(height),
      width_(width),
      u_(checked_count(height, width, 1), u),
      v_(u_.size(), v) {}

FlowField::FlowField(int height, int width, std::vector<float> u, std::vector<float> v)
    : height_(height), width_(width), u_(std::move(u)), v_(std::move(v)) {
  const auto n = checked_count(height, width, 1);
  require_count(n, u_.size(), "FlowField u");
  require_count(n, v_.size(), "FlowField v");
}

void require_same_shape(const Frame& a, const Frame& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.height()) +
                     "x" + std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
                     "x" + std::to_string(b.width()));
  }
}

bool all_finite(std::span<const float> samples) {
  return std::ranges::all_of(samples, [](float s) { return std::isfinite(s); });
}

double mean_of(std::span<const float> samples) {
  if (samples.empty()) return 0.0;
  double sum = 0.0;
  for (float s : samples) sum += s;
  return sum / static_cast<double>(samples.size());
}

void clamp_samples(std::span<float> samples, float lo, float hi) {
  for (float& s : samples) s = std::clamp(s, lo, hi);
}

float sample_bilinear(const Frame& image, float x, float y) {
  const float max_x = static_cast<float>(image.width() - 1);
  const float max_y = static_cast<float>(image.height() - 1);
  // NaN coordinates fall through std::clamp unchanged; pin them to the origin.
  x = std::isnan(x) ? 0.0f : std::clamp(x, 0.0f, max_x);
  y = std::isnan(y) ? 0.0f : std::clamp(y, 0.0f, max_y);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, image.width() - 1);
  const int y1 = std::min(y0 + 1, image.height() - 1);
  const float fx = x - static_cast<float>(x0);
  const float fy = y - static_cast<float>(y0);
  const float top = (1.0f - fx) * image(y0, x0) + fx * image(y0, x1);
  const float bottom = (1.0f - fx) * image(y1, x0) + fx * image(y1, x1);
  return (1.0f - fy) * top + fy * bottom;
}

}  // namespace khcv
