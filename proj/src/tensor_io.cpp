#include "khcv/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace khcv {
namespace {

constexpr std::uint8_t kDtypeReal32 = 0;
constexpr std::uint8_t kDtypeBinary = 1;
constexpr std::uint8_t kNdimFlow = 4;
constexpr char kMagic[4] = {'K', 'H', 'C', 'V'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out_.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void f32(std::span<const float> values) {
    out_.reserve(out_.size() + values.size() * 4);
    for (float f : values) u32(std::bit_cast<std::uint32_t>(f));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw ParseError(ParseError::Kind::kTruncated,
                       std::string("truncated KHCV data while reading ") + what);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in_[pos_ + b]) << (8 * b);
    pos_ += 4;
    return v;
  }
  std::vector<float> f32(std::size_t count, const char* what) {
    need(count * 4, what);
    std::vector<float> out(count);
    for (auto& f : out) f = std::bit_cast<float>(u32(what));
    return out;
  }
  std::vector<std::uint8_t> raw(std::size_t count, const char* what) {
    need(count, what);
    std::vector<std::uint8_t> out(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  in_.begin() + static_cast<std::ptrdiff_t>(pos_ + count));
    pos_ += count;
    return out;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void header(Writer& w, std::uint8_t dtype, std::uint8_t ndim,
            std::initializer_list<int> dims) {
  w.bytes(kMagic, 4);
  w.u8(kKhcvVersion);
  w.u8(dtype);
  w.u8(ndim);
  for (int d : dims) w.u32(static_cast<std::uint32_t>(d));
}

int checked_dim(std::uint32_t d) {
  if (d == 0 || d > (1u << 20)) {
    throw ParseError(ParseError::Kind::kDims, "KHCV dimension out of range: " + std::to_string(d));
  }
  return static_cast<int>(d);
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

// Skips whitespace and '#' comments in a PNM header, then reads an integer.
int pnm_int(const std::vector<std::uint8_t>& bytes, std::size_t& pos, const std::string& name) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
    throw ParseError(ParseError::Kind::kFormat, name + ": malformed PGM header");
  }
  long value = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    value = value * 10 + (bytes[pos] - '0');
    if (value > (1 << 24)) throw ParseError(ParseError::Kind::kFormat, name + ": PGM value too large");
    ++pos;
  }
  return static_cast<int>(value);
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
  Writer w;
  std::visit(
      [&w](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, Frame>) {
          header(w, kDtypeReal32, 2, {t.height(), t.width()});
          w.f32(t.samples());
        } else if constexpr (std::is_same_v<T, VideoCube>) {
          header(w, kDtypeReal32, 3, {t.height(), t.width(), t.frames()});
          w.f32(t.samples());
        } else if constexpr (std::is_same_v<T, CodingCube>) {
          header(w, kDtypeBinary, 3, {t.height(), t.width(), t.frames()});
          w.bytes(t.samples().data(), t.samples().size());
        } else {
          header(w, kDtypeReal32, kNdimFlow, {t.height(), t.width(), 2});
          w.f32(t.u_samples());
          w.f32(t.v_samples());
        }
      },
      tensor);
  return w.take();
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.u8("magic"));
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError(ParseError::Kind::kMagic, "bad magic, not a KHCV file");
  }
  const auto version = r.u8("version");
  if (version != kKhcvVersion) {
    throw ParseError(ParseError::Kind::kVersion,
                     "unsupported KHCV version " + std::to_string(version));
  }
  const auto dtype = r.u8("dtype");
  if (dtype != kDtypeReal32 && dtype != kDtypeBinary) {
    throw ParseError(ParseError::Kind::kDtype, "unknown KHCV dtype " + std::to_string(dtype));
  }
  const auto ndim = r.u8("ndim");

  auto finish = [&r](Tensor t) -> Tensor {
    if (r.remaining() != 0) {
      throw ParseError(ParseError::Kind::kTrailing, "trailing bytes after KHCV payload");
    }
    return t;
  };

  switch (ndim) {
    case 2: {
      if (dtype != kDtypeReal32) {
        throw ParseError(ParseError::Kind::kDtype, "2-d KHCV tensors must be real32");
      }
      const int h = checked_dim(r.u32("dims"));
      const int w = checked_dim(r.u32("dims"));
      auto samples = r.f32(static_cast<std::size_t>(h) * w, "payload");
      return finish(Frame(h, w, std::move(samples)));
    }
    case 3: {
      const int h = checked_dim(r.u32("dims"));
      const int w = checked_dim(r.u32("dims"));
      const int b = checked_dim(r.u32("dims"));
      const std::size_t n = static_cast<std::size_t>(h) * w * b;
      if (dtype == kDtypeBinary) {
        auto raw = r.raw(n, "payload");
        if (std::ranges::any_of(raw, [](std::uint8_t s) { return s > 1; })) {
          throw ParseError(ParseError::Kind::kFormat, "binary KHCV payload holds values other than 0/1");
        }
        return finish(CodingCube(h, w, b, std::move(raw)));
      }
      auto samples = r.f32(n, "payload");
      return finish(VideoCube(h, w, b, std::move(samples)));
    }
    case kNdimFlow: {
      if (dtype != kDtypeReal32) {
        throw ParseError(ParseError::Kind::kDtype, "flow KHCV tensors must be real32");
      }
      const int h = checked_dim(r.u32("dims"));
      const int w = checked_dim(r.u32("dims"));
      const auto planes = r.u32("dims");
      if (planes != 2) {
        throw ParseError(ParseError::Kind::kDims, "flow tensors must have 2 planes");
      }
      const std::size_t n = static_cast<std::size_t>(h) * w;
      auto u = r.f32(n, "payload");
      auto v = r.f32(n, "payload");
      return finish(FlowField(h, w, std::move(u), std::move(v)));
    }
    default:
      throw ParseError(ParseError::Kind::kDims, "unsupported KHCV ndim " + std::to_string(ndim));
  }
}

void save_tensor(const Tensor& tensor, const std::filesystem::path& path) {
  write_bytes(path, encode_tensor(tensor));
}
void save_tensor(const Frame& frame, const std::filesystem::path& path) {
  save_tensor(Tensor(frame), path);
}
void save_tensor(const VideoCube& cube, const std::filesystem::path& path) {
  save_tensor(Tensor(cube), path);
}
void save_tensor(const CodingCube& cube, const std::filesystem::path& path) {
  save_tensor(Tensor(cube), path);
}
void save_tensor(const FlowField& flow, const std::filesystem::path& path) {
  save_tensor(Tensor(flow), path);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

Tensor load_tensor(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    Tensor t = decode_tensor(bytes);
    const bool finite = std::visit(
        [](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, FlowField>) {
            return all_finite(v.u_samples()) && all_finite(v.v_samples());
          } else if constexpr (std::is_same_v<T, CodingCube>) {
            return true;
          } else {
            return all_finite(v.samples());
          }
        },
        t);
    if (!finite) throw ParseError(ParseError::Kind::kFormat, "non-finite samples");
    return t;
  } catch (const ParseError& e) {
    throw ParseError(e.kind(), path.string() + ": " + e.what());
  }
}

const char* tensor_kind_name(const Tensor& tensor) {
  switch (tensor.index()) {
    case 0: return "frame";
    case 1: return "video cube";
    case 2: return "coding cube";
    default: return "flow field";
  }
}

Frame import_pgm(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const std::string name = path.string();
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw ParseError(ParseError::Kind::kMagic, name + ": not a binary P5 PGM");
  }
  std::size_t pos = 2;
  const int width = pnm_int(bytes, pos, name);
  const int height = pnm_int(bytes, pos, name);
  const int maxval = pnm_int(bytes, pos, name);
  if (maxval != 255) {
    throw ParseError(ParseError::Kind::kFormat,
                     name + ": only maxval 255 is supported, got " + std::to_string(maxval));
  }
  if (width <= 0 || height <= 0) throw ParseError(ParseError::Kind::kDims, name + ": empty image");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw ParseError(ParseError::Kind::kFormat, name + ": malformed PGM header");
  }
  ++pos;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (bytes.size() - pos < n) throw ParseError(ParseError::Kind::kTruncated, name + ": truncated PGM");
  std::vector<float> samples(n);
  for (std::size_t i = 0; i < n; ++i) samples[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
  return Frame(height, width, std::move(samples));
}

std::uint8_t quantize_unit(float sample) {
  const float s = std::isnan(sample) ? 0.0f : std::clamp(sample, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::floor(static_cast<double>(s) * 255.0 + 0.5));
}

void export_pgm(const Frame& frame, const std::filesystem::path& path) {
  std::string head = "P5\n" + std::to_string(frame.width()) + " " +
                     std::to_string(frame.height()) + "\n255\n";
  std::vector<std::uint8_t> bytes(head.begin(), head.end());
  bytes.reserve(bytes.size() + frame.size());
  for (float s : frame.samples()) bytes.push_back(quantize_unit(s));
  write_bytes(path, bytes);
}

void export_ppm(const RgbImage& image, const std::filesystem::path& path) {
  std::string head = "P6\n" + std::to_string(image.width) + " " +
                     std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(head.begin(), head.end());
  bytes.reserve(bytes.size() + image.rgb.size());
  for (float s : image.rgb) bytes.push_back(quantize_unit(s));
  write_bytes(path, bytes);
}

VideoCube import_pgm_sequence(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
      files.push_back(entry.path());
    }
  }
  if (files.empty()) throw IoError(dir.string() + ": no .pgm frames found");
  std::ranges::sort(files, [](const auto& a, const auto& b) {
    return a.filename().string() < b.filename().string();
  });
  std::vector<Frame> frames;
  frames.reserve(files.size());
  for (const auto& f : files) {
    frames.push_back(import_pgm(f));
    require_same_shape(frames.front(), frames.back(), "PGM sequence");
  }
  return stack_frames(frames);
}

void export_pgm_sequence(const VideoCube& cube, const std::filesystem::path& dir,
                         const std::string& prefix) {
  std::filesystem::create_directories(dir);
  for (int k = 0; k < cube.frames(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04d.pgm", k + 1);
    export_pgm(extract_frame(cube, k), dir / (prefix + name));
  }
}

VideoCube load_scene(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return import_pgm_sequence(path);
  return load_tensor_as<VideoCube>(path);
}

}  // namespace khcv
