#include <cmath>
#include <algorithm>
#include <fstream>
#include <functional>

#include "doctest.h"
#include "khcv/pipeline.hpp"
#include "khcv/scenes.hpp"
#include "khcv/tensor_io.hpp"
#include "test_util.hpp"

using namespace khcv;
using nlohmann::json;
using khcv::testing::scratch_dir;

namespace {

PipelineConfig small_config(const std::filesystem::path& dir, int frames, int scene_frames, int size = 48) {
  const auto scene_path = dir / "scene.khcv";
  save_tensor(translating_texture(size, size, scene_frames, 0.5, 0.25, 11), scene_path);
  PipelineConfig c;
  c.scene = scene_path;
  c.frames = frames;
  c.mask_seed = 3;
  c.output_dir = dir / "out";
  c.gap_tv.outer_iters = 20;
  return c;
}

void check_score_schema(const json& row, bool with_k) {
  CHECK(row.is_object());
  if (with_k) CHECK(row["k"].is_number_integer());
  CHECK((row["psnr_db"].is_number() || row["psnr_db"] == "inf"));
  CHECK(row["ssim"].is_number());
  CHECK(row["l1"].is_number());
}

int code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return exit_code_for(e);
  }
  return kExitOk;
}

}  // namespace

TEST_CASE("config defaults and overrides") {
  const PipelineConfig def = config_from_json(json::object());
  CHECK(def.frames == 16);
  CHECK(def.t_x_us == 2083);
  CHECK(def.gap_frames == 0);
  CHECK(def.fusion.fallback_threshold.has_value());

  const json doc = json::parse(R"({
    "scene": "scenes/a.khcv", "B": 8, "t_x_us": 1000, "t_g_us": 300, "gap_frames": 2,
    "mask": {"seed": 5, "density": 0.4}, "noise": {"sigma": 0.01, "seed": 9},
    "gap_tv": {"outer_iters": 30, "tv_weight": 0.05},
    "fusion": {"beta": 10.0, "fallback_threshold": null, "flow": {"alpha": 0.3, "pyramid_levels": 2}},
    "output_dir": "out", "dump_intermediates": true
  })");
  const PipelineConfig c = config_from_json(doc, "/base");
  CHECK(c.scene == std::filesystem::path("/base/scenes/a.khcv"));
  CHECK(c.output_dir == std::filesystem::path("/base/out"));
  CHECK(c.frames == 8);
  CHECK(c.t_g_us == 300);
  CHECK(c.mask_seed == 5);
  CHECK(c.mask_density == doctest::Approx(0.4));
  CHECK(c.noise().sigma == doctest::Approx(0.01));
  CHECK(c.gap_tv.outer_iters == 30);
  CHECK(c.gap_tv.tv_inner_iters == GapTvParams{}.tv_inner_iters);
  CHECK_FALSE(c.fusion.fallback_threshold.has_value());
  CHECK(c.fusion.flow_params.alpha == doctest::Approx(0.3));
  CHECK(c.fusion.flow_params.pyramid_levels == 2);
  CHECK(c.dump_intermediates);

  const PipelineConfig again = config_from_json(config_to_json(c));
  CHECK(config_to_json(again) == config_to_json(c));
}

TEST_CASE("config errors map to exit code 2") {
  const char* bad[] = {
      R"({"B": 0})",
      R"({"t_x_us": 2083.5})",
      R"({"t_x_us": -1})",
      R"({"gap_frames": -1})",
      R"({"typo": 1})",
      R"({"mask": {"density": 2.0}})",
      R"({"fusion": {"beta": "high"}})",
      R"({"gap_tv": {"outer_iters": 0}})",
      R"({"fusion": {"flow": {"alpha": 0}}})",
      R"([1, 2])",
  };
  for (const char* text : bad) {
    CAPTURE(text);
    CHECK(code_of([&] { config_from_json(json::parse(text)); }) == kExitConfig);
  }
  const auto dir = scratch_dir("pipeline_config_file");
  write_text(dir / "broken.json", "{ not json");
  CHECK(code_of([&] { load_config(dir / "broken.json"); }) == kExitConfig);
  CHECK(code_of([&] { load_config(dir / "missing.json"); }) == kExitConfig);
}

TEST_CASE("exit code mapping") {
  CHECK(exit_code_for(ShapeError("x")) == kExitData);
  CHECK(exit_code_for(IoError("x")) == kExitData);
  CHECK(exit_code_for(ParseError(ParseError::Kind::kMagic, "x")) == kExitData);
  CHECK(exit_code_for(NumericalError("x")) == kExitNumerical);
  CHECK(exit_code_for(ArgumentError("x")) == kExitConfig);
  CHECK(exit_code_for(std::runtime_error("x")) == kExitFailure);
  const StageError e("fuse", kExitNumerical, "boom");
  CHECK(std::string(e.what()) == "[fuse] boom");
  CHECK(exit_code_for(e) == kExitNumerical);
}

TEST_CASE("manifest round trip") {
  MeasurementManifest m;
  m.schedule = build_schedule(2083, 16, 300);
  m.gap_frames = 2;
  m.seed = 77;
  m.noise_sigma = 0.01;
  m.noise_seed = 4;
  const json j = manifest_to_json(m);
  CHECK(j["t_y"] == 33328);
  const MeasurementManifest back = manifest_from_json(j);
  CHECK(back.schedule == m.schedule);
  CHECK(back.gap_frames == 2);
  CHECK(back.seed == 77);
  CHECK(back.y == m.y);

  json broken = j;
  broken["t_y"] = 1000;
  CHECK_THROWS_AS(manifest_from_json(broken), ConfigError);
  broken = j;
  broken.erase("masks");
  CHECK_THROWS_AS(manifest_from_json(broken), ConfigError);
}

TEST_CASE("simulated measurement reloads through its manifest") {
  const auto dir = scratch_dir("pipeline_measurement");
  PipelineConfig c = small_config(dir, 8, 12, 32);
  c.gap_frames = 1;
  const SimulationOutput sim = simulate_from_config(c);
  save_measurement(sim.measurement, &sim.ground_truth, sim.manifest, dir / "m");
  const LoadedMeasurement loaded = load_measurement(dir / "m" / "manifest.json");
  CHECK(loaded.measurement.y == sim.measurement.y);
  CHECK(loaded.measurement.z_left == sim.measurement.z_left);
  CHECK(loaded.measurement.masks == sim.measurement.masks);
  CHECK(loaded.manifest.gap_frames == 1);
  REQUIRE(loaded.ground_truth.has_value());
  CHECK(*loaded.ground_truth == sim.ground_truth);
}

TEST_CASE("full pipeline outputs, schema and determinism") {
  const auto dir = scratch_dir("pipeline_full");
  PipelineConfig c = small_config(dir, 16, 18, 64);
  c.gap_tv.outer_iters = 60;
  c.dump_intermediates = true;
  const PipelineResult first = run_pipeline(c);

  for (const char* name : {"measurement/y.khcv", "measurement/z_left.khcv", "measurement/z_right.khcv",
                           "measurement/masks.khcv", "measurement/ground_truth.khcv",
                           "measurement/manifest.json", "intermediate.khcv", "fused.khcv",
                           "metrics_fused.json", "metrics_fused.csv", "metrics_intermediate.json",
                           "metrics_intermediate.csv", "summary.json"}) {
    CAPTURE(name);
    CHECK(std::filesystem::exists(c.output_dir / name));
  }
  CHECK(std::filesystem::exists(c.output_dir / "diagnostics" / "frame_0001_visibility.pgm"));
  CHECK(first.fused.per_frame.size() == 16);
  CHECK(first.fused.mean.psnr_db >= first.intermediate.mean.psnr_db);

  std::ifstream in(c.output_dir / "summary.json");
  const json summary = json::parse(in);
  CHECK(summary["config"].is_object());
  REQUIRE(summary["per_frame"].size() == 16);
  for (const auto& row : summary["per_frame"]) check_score_schema(row, true);
  check_score_schema(summary["mean"], false);
  check_score_schema(summary["intermediate_mean"], false);
  CHECK(summary["per_frame"][0]["k"] == 1);

  // A second run into a different folder must produce identical bytes.
  PipelineConfig c2 = c;
  c2.output_dir = dir / "out2";
  c2.dump_intermediates = false;
  run_pipeline(c2);
  for (const char* name : {"measurement/y.khcv", "measurement/z_left.khcv", "measurement/z_right.khcv",
                           "measurement/masks.khcv", "intermediate.khcv", "fused.khcv"}) {
    CAPTURE(name);
    CHECK(read_file_bytes(c.output_dir / name) == read_file_bytes(c2.output_dir / name));
  }
}

TEST_CASE("pipeline stage errors") {
  const auto dir = scratch_dir("pipeline_errors");
  PipelineConfig c = small_config(dir, 16, 17, 32);
  try {
    run_pipeline(c);
    FAIL("short scene accepted");
  } catch (const StageError& e) {
    CHECK(e.stage() == "simulate");
    CHECK(e.exit_code() == kExitData);
    CHECK(std::string(e.what()).find("18") != std::string::npos);
  }
  c.scene = dir / "missing.khcv";
  CHECK(code_of([&] { run_pipeline(c); }) == kExitData);
  c.frames = 0;
  CHECK(code_of([&] { run_pipeline(c); }) == kExitConfig);
}

TEST_CASE("frame-gap sweep") {
  const auto dir = scratch_dir("pipeline_sweep");
  PipelineConfig c = small_config(dir, 16, 26, 32);
  c.fusion.flow_params.pyramid_levels = 2;
  const SweepResult r = sweep_frame_gap(c, {4, 0, 2});
  REQUIRE(r.rows.size() == 3);
  CHECK(r.rows[0].gap_frames == 0);
  CHECK(r.rows[0].gap_ratio == 0.0);
  CHECK(r.rows[1].gap_ratio == 0.125);
  CHECK(r.rows[2].gap_ratio == 0.25);
  CHECK(std::filesystem::exists(c.output_dir / "sweep.csv"));
  CHECK(std::filesystem::exists(c.output_dir / "sweep.json"));

  const std::string csv = sweep_to_csv(r);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  // A one-row sweep equals a plain pipeline run with the same settings.
  PipelineConfig single = c;
  single.output_dir = dir / "single";
  const SweepResult one = sweep_frame_gap(single, {0});
  PipelineConfig plain = c;
  plain.output_dir = dir / "plain";
  const PipelineResult p = run_pipeline(plain);
  REQUIRE(one.rows.size() == 1);
  CHECK(one.rows[0].mean_psnr_db == p.fused.mean.psnr_db);
  CHECK(one.rows[0].mean_ssim == p.fused.mean.ssim);
  CHECK(one.rows[0].mean_psnr_db == r.rows[0].mean_psnr_db);

  CHECK(code_of([&] { sweep_frame_gap(c, {0, 6}); }) == kExitData);
  CHECK(code_of([&] { sweep_frame_gap(c, {}); }) == kExitConfig);
  CHECK(code_of([&] { sweep_frame_gap(c, {-1}); }) == kExitConfig);
}

TEST_CASE("file comparison") {
  const auto dir = scratch_dir("pipeline_compare");
  std::mt19937 rng(6);
  const VideoCube a = khcv::testing::random_cube(rng, 16, 16, 2);
  VideoCube b = a;
  for (float& s : b.samples()) s += 10.0f / 255.0f;
  save_tensor(a, dir / "a.khcv");
  save_tensor(b, dir / "b.khcv");
  save_tensor(Frame(16, 16), dir / "f.khcv");

  const MetricReport same = compare_files(dir / "a.khcv", dir / "a.khcv");
  CHECK(report_to_json(same)["mean"]["psnr_db"] == "inf");
  CHECK(same.mean.ssim == doctest::Approx(1.0).epsilon(1e-9));
  const MetricReport off = compare_files(dir / "b.khcv", dir / "a.khcv");
  CHECK(std::abs(off.mean.psnr_db - 28.13) < 0.01);
  CHECK(off.mean.l1 == doctest::Approx(10.0 / 255.0).epsilon(1e-5));
  CHECK_THROWS_AS(compare_files(dir / "a.khcv", dir / "f.khcv"), ShapeError);
}
