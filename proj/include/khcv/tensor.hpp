// Dense sample containers shared by every stage of the toolchain.
//
// Index convention is (row i, column j, frame k): row-major inside a frame,
// frames stored contiguously one after another. Samples are 32-bit floats on
// a nominal [0, 1] intensity scale.

#ifndef KHCV_TENSOR_HPP_
#define KHCV_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace khcv {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mismatched dimensions, sample counts, or invalid sample values.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid parameters handed to an operation (negative weights, zero sizes...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// A computation produced non-finite values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class Frame {
 public:
  Frame() = default;
  Frame(int height, int width, float fill = 0.0f);
  Frame(int height, int width, std::vector<float> samples);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }

  float& operator()(int i, int j) { return samples_[index(i, j)]; }
  float operator()(int i, int j) const { return samples_[index(i, j)]; }

  std::span<float> samples() { return samples_; }
  std::span<const float> samples() const { return samples_; }

  bool same_shape(const Frame& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool operator==(const Frame& other) const = default;

 private:
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(j);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> samples_;
};

// A stack of equally sized planes. VideoCube holds real intensities,
// CodingCube holds binary modulation masks (every sample 0 or 1).
template <typename T>
class BasicCube {
 public:
  using value_type = T;

  BasicCube() = default;
  BasicCube(int height, int width, int frames, T fill = T{});
  BasicCube(int height, int width, int frames, std::vector<T> samples);

  int height() const { return height_; }
  int width() const { return width_; }
  int frames() const { return frames_; }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  std::size_t size() const { return samples_.size(); }

  T& operator()(int i, int j, int k) { return samples_[index(i, j, k)]; }
  T operator()(int i, int j, int k) const { return samples_[index(i, j, k)]; }

  std::span<T> plane(int k) {
    return std::span<T>(samples_).subspan(static_cast<std::size_t>(k) * plane_size(),
                                          plane_size());
  }
  std::span<const T> plane(int k) const {
    return std::span<const T>(samples_).subspan(
        static_cast<std::size_t>(k) * plane_size(), plane_size());
  }

  std::span<T> samples() { return samples_; }
  std::span<const T> samples() const { return samples_; }

  template <typename U>
  bool same_shape(const BasicCube<U>& other) const {
    return height_ == other.height() && width_ == other.width() &&
           frames_ == other.frames();
  }
  bool same_plane_shape(const Frame& f) const {
    return height_ == f.height() && width_ == f.width();
  }

  bool operator==(const BasicCube& other) const = default;

 private:
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(k) * plane_size() +
           static_cast<std::size_t>(i) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(j);
  }
  void validate() const;

  int height_ = 0;
  int width_ = 0;
  int frames_ = 0;
  std::vector<T> samples_;
};

using VideoCube = BasicCube<float>;
using CodingCube = BasicCube<std::uint8_t>;

extern template class BasicCube<float>;
extern template class BasicCube<std::uint8_t>;

// Copies frame k out of a video cube.
Frame extract_frame(const VideoCube& cube, int k);
// Overwrites frame k of a video cube.
void assign_frame(VideoCube& cube, int k, const Frame& frame);
// Stacks equally sized frames into a cube.
VideoCube stack_frames(std::span<const Frame> frames);
// Copies frames [first, first + count) into a new cube.
VideoCube slice_frames(const VideoCube& cube, int first, int count);

// Per-pixel displacement in pixels: u rightward, v downward.
class FlowField {
 public:
  FlowField() = default;
  FlowField(int height, int width, float u = 0.0f, float v = 0.0f);
  FlowField(int height, int width, std::vector<float> u, std::vector<float> v);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return u_.size(); }

  float& u(int i, int j) { return u_[index(i, j)]; }
  float u(int i, int j) const { return u_[index(i, j)]; }
  float& v(int i, int j) { return v_[index(i, j)]; }
  float v(int i, int j) const { return v_[index(i, j)]; }

  std::span<float> u_samples() { return u_; }
  std::span<const float> u_samples() const { return u_; }
  std::span<float> v_samples() { return v_; }
  std::span<const float> v_samples() const { return v_; }

  bool same_shape(const FlowField& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }
  bool same_shape(const Frame& f) const {
    return height_ == f.height() && width_ == f.width();
  }

  bool operator==(const FlowField& other) const = default;

 private:
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(j);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> u_;
  std::vector<float> v_;
};

// Interleaved RGB, channels in [0, 1]. Only used for visualization output.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<float> rgb;

  float& at(int i, int j, int c) {
    return rgb[(static_cast<std::size_t>(i) * width + j) * 3 + c];
  }
  float at(int i, int j, int c) const {
    return rgb[(static_cast<std::size_t>(i) * width + j) * 3 + c];
  }
};

// Throws ShapeError unless a and b have identical height and width.
void require_same_shape(const Frame& a, const Frame& b, const char* what);

bool all_finite(std::span<const float> samples);

// Mean of all samples, accumulated in double precision.
double mean_of(std::span<const float> samples);

// Clamps every sample to [lo, hi] in place.
void clamp_samples(std::span<float> samples, float lo, float hi);

// Bilinear sample at fractional (x = column, y = row); coordinates outside the
// frame are clamped, which replicates the border.
float sample_bilinear(const Frame& image, float x, float y);

}  // namespace khcv

#endif  // KHCV_TENSOR_HPP_
