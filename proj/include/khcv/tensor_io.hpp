// KHCV binary tensor files and 8-bit PGM/PPM interchange.
//
// KHCV layout (all integers little-endian):
//   "KHCV" | version u8 (=1) | dtype u8 | ndim u8 | dims u32[...] | payload
// dtype 0 = real32, 1 = uint8 binary. ndim 2 is a Frame (height, width),
// ndim 3 a cube (height, width, frames). ndim 4 tags a flow field; it is
// followed by three dims (height, width, 2) and the u plane then the v plane.

#ifndef KHCV_TENSOR_IO_HPP_
#define KHCV_TENSOR_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "khcv/tensor.hpp"

namespace khcv {

using Tensor = std::variant<Frame, VideoCube, CodingCube, FlowField>;

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  enum class Kind { kMagic, kVersion, kDtype, kDims, kTruncated, kTrailing, kFormat };

  ParseError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint8_t kKhcvVersion = 1;

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void save_tensor(const Frame& frame, const std::filesystem::path& path);
void save_tensor(const VideoCube& cube, const std::filesystem::path& path);
void save_tensor(const CodingCube& cube, const std::filesystem::path& path);
void save_tensor(const FlowField& flow, const std::filesystem::path& path);
void save_tensor(const Tensor& tensor, const std::filesystem::path& path);

Tensor load_tensor(const std::filesystem::path& path);

// Loads a file and requires it to hold a T; throws ShapeError otherwise.
template <typename T>
T load_tensor_as(const std::filesystem::path& path) {
  Tensor t = load_tensor(path);
  if (auto* value = std::get_if<T>(&t)) return std::move(*value);
  throw ShapeError(path.string() + ": file holds a different tensor kind");
}

const char* tensor_kind_name(const Tensor& tensor);

Frame import_pgm(const std::filesystem::path& path);
// Samples are clamped to [0,1] and quantized with round-half-up.
void export_pgm(const Frame& frame, const std::filesystem::path& path);
void export_ppm(const RgbImage& image, const std::filesystem::path& path);

std::uint8_t quantize_unit(float sample);

// Reads every *.pgm in a directory, in lexicographic filename order.
VideoCube import_pgm_sequence(const std::filesystem::path& dir);
// Writes frame_0001.pgm, frame_0002.pgm, ... into dir.
void export_pgm_sequence(const VideoCube& cube, const std::filesystem::path& dir,
                         const std::string& prefix = "frame_");

// Reads a VideoCube from a KHCV file or a directory of PGM frames.
VideoCube load_scene(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace khcv

#endif  // KHCV_TENSOR_IO_HPP_
