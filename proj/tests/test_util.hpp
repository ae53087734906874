#ifndef KHCV_TEST_UTIL_HPP_
#define KHCV_TEST_UTIL_HPP_

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "khcv/tensor.hpp"

namespace khcv::testing {

// Fresh scratch directory under $KHCV_TEST_TMP (or the system temp dir).
inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* root = std::getenv("KHCV_TEST_TMP");
  std::filesystem::path dir =
      root ? std::filesystem::path(root) : std::filesystem::temp_directory_path() / "khcv_tests";
  dir /= name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Frame random_frame(std::mt19937& rng, int h, int w, float lo = 0.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Frame f(h, w);
  for (float& s : f.samples()) s = dist(rng);
  return f;
}

inline VideoCube random_cube(std::mt19937& rng, int h, int w, int b) {
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  VideoCube c(h, w, b);
  for (float& s : c.samples()) s = dist(rng);
  return c;
}

inline CodingCube random_masks(std::mt19937& rng, int h, int w, int b) {
  std::bernoulli_distribution coin(0.5);
  CodingCube c(h, w, b);
  for (auto& s : c.samples()) s = coin(rng) ? 1 : 0;
  return c;
}

inline double max_abs_diff(const Frame& a, const Frame& b) {
  double m = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n) {
    m = std::max(m, static_cast<double>(std::abs(a.samples()[n] - b.samples()[n])));
  }
  return m;
}

}  // namespace khcv::testing

#endif  // KHCV_TEST_UTIL_HPP_
