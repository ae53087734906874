#include <chrono>
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "khcv/flow.hpp"
#include "khcv/metrics.hpp"
#include "khcv/scenes.hpp"
#include "test_util.hpp"

using namespace khcv;

namespace {

// Mean endpoint error against a constant field over an optional mask and a
// central crop dropping `margin` pixels per side.
double constant_epe(const FlowField& f, double u, double v, int margin, const Frame* mask = nullptr) {
  double sum = 0.0;
  int count = 0;
  for (int i = margin; i < f.height() - margin; ++i) {
    for (int j = margin; j < f.width() - margin; ++j) {
      if (mask && (*mask)(i, j) == 0.0f) continue;
      sum += std::hypot(f.u(i, j) - u, f.v(i, j) - v);
      ++count;
    }
  }
  return sum / count;
}

}  // namespace

TEST_CASE("identical frames give near-zero flow") {
  const PlaneWaveTexture tex(3);
  const Frame img = tex.render(96, 80);
  CHECK(mean_flow_magnitude(estimate_flow(img, img)) < 1e-2);
  const Frame blob = gaussian_blob(64, 64, 30, 34, 6);
  CHECK(mean_flow_magnitude(estimate_flow(blob, blob)) < 1e-2);
  const Frame flat(32, 32, 0.4f);
  CHECK(mean_flow_magnitude(estimate_flow(flat, flat)) < 1e-2);
}

TEST_CASE("blob translated by (+3, 0)") {
  const Frame target = gaussian_blob(64, 64, 30.0, 32.0, 6.0);
  const Frame source = gaussian_blob(64, 64, 33.0, 32.0, 6.0);
  const FlowField f = estimate_flow(target, source);
  Frame support(64, 64);
  for (int i = 0; i < 64; ++i) {
    for (int j = 0; j < 64; ++j) support(i, j) = target(i, j) - 0.1f > 0.05f ? 1.0f : 0.0f;
  }
  CHECK(constant_epe(f, 3.0, 0.0, 0, &support) < 0.3);
}

TEST_CASE("texture translations up to 4 px") {
  const PlaneWaveTexture tex(11);
  const int n = 128;
  const Frame target = tex.render(n, n);
  const double shifts[][2] = {{-2.0, 1.0}, {3.0, 0.0}, {0.0, -4.0}, {2.5, 2.5}, {-1.25, -0.5}};
  for (const auto& s : shifts) {
    CAPTURE(s[0]);
    CAPTURE(s[1]);
    const Frame source = tex.render(n, n, s[0], s[1]);
    CHECK(constant_epe(estimate_flow(target, source), s[0], s[1], n / 10) < 0.4);
  }
}

TEST_CASE("initial flow is honoured") {
  const PlaneWaveTexture tex(5);
  const Frame target = tex.render(64, 64);
  const Frame source = tex.render(64, 64, 2.0, -1.0);
  FlowParams one_level;
  one_level.pyramid_levels = 1;
  const FlowField f = estimate_flow_from(target, source, FlowField(64, 64, 2.0f, -1.0f), one_level);
  CHECK(constant_epe(f, 2.0, -1.0, 6) < 0.1);
}

TEST_CASE("flow estimation argument checks") {
  CHECK_THROWS_AS(estimate_flow(Frame(16, 16), Frame(16, 17)), ShapeError);
  // 3 levels need at least 8 * 4 = 32 pixels per side.
  CHECK_THROWS_AS(estimate_flow(Frame(20, 40), Frame(20, 40)), ArgumentError);
  FlowParams p;
  p.pyramid_levels = 1;
  CHECK_NOTHROW(estimate_flow(Frame(20, 40), Frame(20, 40), p));
  p.alpha = 0.0;
  CHECK_THROWS_AS(p.validate(), ArgumentError);
}

TEST_CASE("compose of constant fields") {
  const FlowField a(10, 12, 1.0f, 0.0f);
  const FlowField b(10, 12, 2.0f, 0.0f);
  const FlowField c(10, 12, -0.5f, 1.5f);
  const FlowField single[] = {a};
  CHECK(compose_flows(single) == a);
  const FlowField pair[] = {a, b};
  const FlowField ab = compose_flows(pair);
  for (float u : ab.u_samples()) CHECK(u == 3.0f);
  for (float v : ab.v_samples()) CHECK(v == 0.0f);

  const FlowField abc[] = {a, b, c};
  const FlowField bc_steps[] = {b, c};
  const FlowField bc = compose_flows(bc_steps);
  const FlowField left_steps[] = {ab, c};
  const FlowField right_steps[] = {a, bc};
  CHECK(compose_flows(left_steps) == compose_flows(right_steps));
  CHECK(compose_flows(abc) == compose_flows(left_steps));

  const FlowField empty_list[1] = {};
  CHECK_THROWS_AS(compose_flows(std::span<const FlowField>(empty_list, 0)), ArgumentError);
  const FlowField mismatched[] = {a, FlowField(3, 3)};
  CHECK_THROWS_AS(compose_flows(mismatched), ShapeError);
}

TEST_CASE("zero field is a left identity of composition") {
  std::mt19937 rng(6);
  std::uniform_real_distribution<float> d(-2.0f, 2.0f);
  FlowField f(16, 16);
  for (float& u : f.u_samples()) u = d(rng);
  for (float& v : f.v_samples()) v = d(rng);
  const FlowField steps[] = {FlowField(16, 16), f};
  CHECK(mean_epe(compose_flows(steps), f) < 1e-6);
}

TEST_CASE("chained small translations match the total translation") {
  const PlaneWaveTexture tex(11);
  const int n = 128;
  std::vector<Frame> frames;
  for (int t = 0; t <= 4; ++t) frames.push_back(tex.render(n, n, 1.0 * t, -0.5 * t));
  std::vector<FlowField> steps;
  for (int t = 0; t < 4; ++t) steps.push_back(estimate_flow(frames[t], frames[t + 1]));
  const FlowField chained = compose_flows(steps);
  CHECK(constant_epe(chained, 4.0, -2.0, n / 10) < 0.5);
  const FlowField direct = estimate_flow(frames[0], frames[4]);
  CHECK(constant_epe(direct, 4.0, -2.0, n / 10) < 0.5);
}

TEST_CASE("color wheel") {
  SUBCASE("zero flow is white") {
    const RgbImage img = flow_to_color(FlowField(4, 5));
    for (float c : img.rgb) CHECK(c == 1.0f);
  }
  SUBCASE("rightward flow at full scale is saturated red") {
    const RgbImage img = flow_to_color(FlowField(3, 3, 2.5f, 0.0f), 2.5);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        CHECK(img.at(i, j, 0) == doctest::Approx(1.0));
        CHECK(img.at(i, j, 1) == doctest::Approx(0.0));
        CHECK(img.at(i, j, 2) == doctest::Approx(0.0));
      }
    }
    CHECK(flow_wheel_angle_degrees(2.5f, 0.0f) == doctest::Approx(0.0));
  }
  SUBCASE("opposite vectors sit half a turn apart") {
    for (int step = 0; step < 24; ++step) {
      const double a = step * std::numbers::pi / 12.0 + 0.1;
      const float u = static_cast<float>(3.0 * std::cos(a));
      const float v = static_cast<float>(3.0 * std::sin(a));
      const double diff = std::fmod(
          flow_wheel_angle_degrees(u, v) - flow_wheel_angle_degrees(-u, -v) + 720.0, 360.0);
      CHECK(diff == doctest::Approx(180.0).epsilon(1e-6));
    }
  }
  SUBCASE("channels stay in range") {
    std::mt19937 rng(1);
    std::uniform_real_distribution<float> d(-20.0f, 20.0f);
    FlowField f(20, 20);
    for (float& u : f.u_samples()) u = d(rng);
    for (float& v : f.v_samples()) v = d(rng);
    for (auto scale : {std::optional<double>{}, std::optional<double>{1.0}, std::optional<double>{50.0}}) {
      for (float c : flow_to_color(f, scale).rgb) {
        REQUIRE(c >= 0.0f);
        REQUIRE(c <= 1.0f);
      }
    }
  }
  SUBCASE("wheel wraps around") {
    float a[3], b[3];
    flow_wheel_color(0.0, a);
    flow_wheel_color(1.0, b);
    for (int c = 0; c < 3; ++c) CHECK(a[c] == b[c]);
  }
  CHECK_THROWS_AS(flow_to_color(FlowField(2, 2), 0.0), ArgumentError);
}

TEST_CASE("128x128 pair runs inside the time budget") {
  const PlaneWaveTexture tex(11);
  const Frame target = tex.render(128, 128);
  const Frame source = tex.render(128, 128, 3.0, 0.0);
  const auto t0 = std::chrono::steady_clock::now();
  estimate_flow(target, source);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(seconds < 5.0);
}
