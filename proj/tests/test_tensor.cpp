#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "khcv/tensor.hpp"
#include "khcv/tensor_io.hpp"
#include "test_util.hpp"

using namespace khcv;
using khcv::testing::scratch_dir;

namespace {

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ParseError::Kind parse_kind_of(const std::filesystem::path& p) {
  try {
    load_tensor(p);
  } catch (const ParseError& e) {
    return e.kind();
  }
  FAIL("expected a parse error");
  return ParseError::Kind::kFormat;
}

}  // namespace

TEST_CASE("zero 2x2 frame serializes to header plus 16 payload bytes") {
  const auto dir = scratch_dir("tensor_zero");
  Frame f(2, 2, 0.0f);
  save_tensor(f, dir / "z.khcv");
  const auto bytes = read_file_bytes(dir / "z.khcv");
  const std::vector<std::uint8_t> expected = {'K', 'H', 'C', 'V', 1, 0, 2, 2, 0, 0, 0, 2, 0, 0, 0,
                                              0,   0,   0,   0,   0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  CHECK(bytes == expected);
  CHECK(load_tensor_as<Frame>(dir / "z.khcv") == f);
}

TEST_CASE("payload floats are little-endian IEEE-754") {
  Frame f(1, 1, 1.0f);
  const auto bytes = encode_tensor(f);
  REQUIRE(bytes.size() == 4 + 3 + 8 + 4);
  // 1.0f == 0x3F800000
  CHECK(bytes[15] == 0x00);
  CHECK(bytes[16] == 0x00);
  CHECK(bytes[17] == 0x80);
  CHECK(bytes[18] == 0x3F);
}

TEST_CASE("round trips are bit exact for every tensor kind") {
  const auto dir = scratch_dir("tensor_roundtrip");
  std::mt19937 rng(7);

  SUBCASE("video cube") {
    for (int trial = 0; trial < 20; ++trial) {
      VideoCube c = khcv::testing::random_cube(rng, 4, 4, 3);
      c(0, 0, 0) = -0.0f;
      c(1, 1, 1) = std::numeric_limits<float>::denorm_min();
      save_tensor(c, dir / "c.khcv");
      const auto back = load_tensor_as<VideoCube>(dir / "c.khcv");
      REQUIRE(back.same_shape(c));
      CHECK(std::memcmp(back.samples().data(), c.samples().data(), c.size() * sizeof(float)) == 0);
    }
  }
  SUBCASE("coding cube") {
    const CodingCube m = khcv::testing::random_masks(rng, 5, 3, 4);
    save_tensor(m, dir / "m.khcv");
    CHECK(load_tensor_as<CodingCube>(dir / "m.khcv") == m);
    CHECK(read_file_bytes(dir / "m.khcv")[5] == 1);
  }
  SUBCASE("flow field") {
    FlowField f(3, 5, 1.5f, -0.25f);
    save_tensor(f, dir / "f.khcv");
    const auto back = load_tensor_as<FlowField>(dir / "f.khcv");
    CHECK(back == f);
    for (float u : back.u_samples()) CHECK(u == 1.5f);
    for (float v : back.v_samples()) CHECK(v == -0.25f);
  }
  SUBCASE("variant dispatch keeps the kind") {
    save_tensor(Tensor{Frame(2, 3, 0.25f)}, dir / "t.khcv");
    const Tensor t = load_tensor(dir / "t.khcv");
    CHECK(std::holds_alternative<Frame>(t));
    CHECK(std::string(tensor_kind_name(t)) == "frame");
  }
}

TEST_CASE("corrupted files are rejected with the right error kind") {
  const auto dir = scratch_dir("tensor_corrupt");
  auto good = encode_tensor(Frame(3, 3, 0.5f));

  SUBCASE("bad magic") {
    auto bytes = good;
    bytes[0] = 'X';
    write_bytes(dir / "bad.khcv", bytes);
    CHECK(parse_kind_of(dir / "bad.khcv") == ParseError::Kind::kMagic);
  }
  SUBCASE("truncated payload") {
    auto bytes = good;
    bytes.resize(bytes.size() - 5);
    write_bytes(dir / "bad.khcv", bytes);
    CHECK(parse_kind_of(dir / "bad.khcv") == ParseError::Kind::kTruncated);
  }
  SUBCASE("truncated header") {
    write_bytes(dir / "bad.khcv", {'K', 'H', 'C', 'V', 1});
    CHECK(parse_kind_of(dir / "bad.khcv") == ParseError::Kind::kTruncated);
  }
  SUBCASE("unknown version") {
    auto bytes = good;
    bytes[4] = 9;
    write_bytes(dir / "bad.khcv", bytes);
    CHECK(parse_kind_of(dir / "bad.khcv") == ParseError::Kind::kVersion);
  }
  SUBCASE("unknown dtype") {
    auto bytes = good;
    bytes[5] = 7;
    write_bytes(dir / "bad.khcv", bytes);
    CHECK(parse_kind_of(dir / "bad.khcv") == ParseError::Kind::kDtype);
  }
  SUBCASE("trailing garbage") {
    auto bytes = good;
    bytes.push_back(0);
    write_bytes(dir / "bad.khcv", bytes);
    CHECK(parse_kind_of(dir / "bad.khcv") == ParseError::Kind::kTrailing);
  }
  SUBCASE("zero dimension") {
    auto bytes = good;
    bytes[7] = 0;
    write_bytes(dir / "bad.khcv", bytes);
    CHECK(parse_kind_of(dir / "bad.khcv") == ParseError::Kind::kDims);
  }
  SUBCASE("non-finite sample") {
    auto bytes = good;
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(bytes.data() + 15, &nan, 4);
    write_bytes(dir / "bad.khcv", bytes);
    CHECK(parse_kind_of(dir / "bad.khcv") == ParseError::Kind::kFormat);
  }
  SUBCASE("binary cube holding a 2") {
    auto bytes = encode_tensor(CodingCube(2, 2, 1, 1));
    bytes.back() = 2;
    write_bytes(dir / "bad.khcv", bytes);
    CHECK(parse_kind_of(dir / "bad.khcv") == ParseError::Kind::kFormat);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_tensor(dir / "nope.khcv"), IoError);
  }
  SUBCASE("wrong kind requested") {
    write_bytes(dir / "f.khcv", good);
    CHECK_THROWS_AS(load_tensor_as<VideoCube>(dir / "f.khcv"), ShapeError);
  }
}

TEST_CASE("constructors reject inconsistent shapes and values") {
  CHECK_THROWS_AS(Frame(2, 2, std::vector<float>(3)), ShapeError);
  CHECK_THROWS_AS(Frame(0, 4), ShapeError);
  CHECK_THROWS_AS(VideoCube(2, 2, 2, std::vector<float>(7)), ShapeError);
  CHECK_THROWS_AS(VideoCube(2, 2, 0), ShapeError);
  CHECK_THROWS_AS(CodingCube(1, 2, 1, std::vector<std::uint8_t>{0, 2}), ShapeError);
  CHECK_THROWS_AS(FlowField(2, 2, std::vector<float>(4), std::vector<float>(3)), ShapeError);
  CHECK_NOTHROW(CodingCube(1, 2, 1, std::vector<std::uint8_t>{0, 1}));
}

TEST_CASE("cube layout is frame-major then row-major") {
  VideoCube c(2, 3, 2);
  c(1, 2, 1) = 9.0f;
  CHECK(c.samples()[1 * 6 + 1 * 3 + 2] == 9.0f);
  const Frame f = extract_frame(c, 1);
  CHECK(f(1, 2) == 9.0f);
  const VideoCube s = slice_frames(c, 1, 1);
  CHECK(s.frames() == 1);
  CHECK(s(1, 2, 0) == 9.0f);
  CHECK_THROWS_AS(slice_frames(c, 1, 2), ArgumentError);
  const Frame frames[] = {Frame(2, 3, 1.0f), Frame(2, 3, 2.0f)};
  const VideoCube st = stack_frames(frames);
  CHECK(st(0, 0, 1) == 2.0f);
}

TEST_CASE("PGM quantization and import") {
  const auto dir = scratch_dir("tensor_pgm");
  CHECK(quantize_unit(0.5f) == 128);
  CHECK(quantize_unit(0.0f) == 0);
  CHECK(quantize_unit(1.0f) == 255);
  CHECK(quantize_unit(-3.0f) == 0);
  CHECK(quantize_unit(7.0f) == 255);

  Frame f(1, 3);
  f(0, 0) = 0.0f;
  f(0, 1) = 0.5f;
  f(0, 2) = 1.0f;
  export_pgm(f, dir / "a.pgm");
  const auto bytes = read_file_bytes(dir / "a.pgm");
  REQUIRE(bytes.size() >= 3);
  CHECK(bytes[bytes.size() - 3] == 0);
  CHECK(bytes[bytes.size() - 2] == 128);
  CHECK(bytes[bytes.size() - 1] == 255);

  const Frame back = import_pgm(dir / "a.pgm");
  CHECK(back(0, 0) == 0.0f);
  CHECK(back(0, 2) == 1.0f);
  CHECK(back(0, 1) == doctest::Approx(128.0 / 255.0));

  // Already-quantized frames survive export/import unchanged.
  export_pgm(back, dir / "b.pgm");
  CHECK(import_pgm(dir / "b.pgm") == back);
}

TEST_CASE("PGM parsing handles comments and rejects other formats") {
  const auto dir = scratch_dir("tensor_pgm_parse");
  const std::string header = "P5\n# a comment\n2 1\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.push_back(255);
  bytes.push_back(0);
  write_bytes(dir / "c.pgm", bytes);
  const Frame f = import_pgm(dir / "c.pgm");
  CHECK(f.width() == 2);
  CHECK(f(0, 0) == 1.0f);
  CHECK(f(0, 1) == 0.0f);

  const std::string ascii = "P2\n1 1\n255\n7\n";
  write_bytes(dir / "p2.pgm", std::vector<std::uint8_t>(ascii.begin(), ascii.end()));
  CHECK_THROWS_AS(import_pgm(dir / "p2.pgm"), ParseError);

  bytes.pop_back();
  write_bytes(dir / "short.pgm", bytes);
  CHECK_THROWS_AS(import_pgm(dir / "short.pgm"), ParseError);
}

TEST_CASE("PGM sequences load in lexicographic order") {
  const auto dir = scratch_dir("tensor_seq");
  VideoCube c(2, 2, 3);
  for (int k = 0; k < 3; ++k) {
    for (float& s : c.plane(k)) s = static_cast<float>(k * 100) / 255.0f;
  }
  export_pgm_sequence(c, dir / "seq");
  CHECK(std::filesystem::exists(dir / "seq" / "frame_0001.pgm"));
  const VideoCube back = load_scene(dir / "seq");
  REQUIRE(back.frames() == 3);
  for (int k = 0; k < 3; ++k) CHECK(back(0, 0, k) == doctest::Approx(c(0, 0, k)));
}

TEST_CASE("bilinear sampling") {
  Frame f(2, 2);
  f(0, 0) = 0.0f;
  f(0, 1) = 1.0f;
  f(1, 0) = 2.0f;
  f(1, 1) = 3.0f;
  CHECK(sample_bilinear(f, 0.5f, 0.5f) == doctest::Approx(1.5f));
  CHECK(sample_bilinear(f, 1.0f, 0.0f) == 1.0f);
  // Replicated border.
  CHECK(sample_bilinear(f, -10.0f, 0.0f) == 0.0f);
  CHECK(sample_bilinear(f, 10.0f, 10.0f) == 3.0f);
}
