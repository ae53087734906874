// End-to-end orchestration: simulate -> reconstruct -> fuse -> score, the
// frame-gap sweep, and the JSON config / manifest formats used by the CLI.

#ifndef KHCV_PIPELINE_HPP_
#define KHCV_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "khcv/capture.hpp"
#include "khcv/fusion.hpp"
#include "khcv/gap_tv.hpp"
#include "khcv/metrics.hpp"

namespace khcv {

// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumerical = 4,
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// An error raised by one pipeline stage, tagged with the stage name and the
// exit code the CLI should report.
class StageError : public Error {
 public:
  StageError(std::string stage, int exit_code, const std::string& message)
      : Error("[" + stage + "] " + message), stage_(std::move(stage)), exit_code_(exit_code) {}

  const std::string& stage() const { return stage_; }
  int exit_code() const { return exit_code_; }

 private:
  std::string stage_;
  int exit_code_;
};

// Maps library exceptions onto exit codes.
int exit_code_for(const std::exception& e);

struct PipelineConfig {
  std::filesystem::path scene;
  int frames = 16;  // B
  std::int64_t t_x_us = 2083;
  std::int64_t t_g_us = 0;
  int gap_frames = 0;
  std::uint64_t mask_seed = 1;
  double mask_density = 0.5;
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 2;
  GapTvParams gap_tv;
  FusionParams fusion;
  std::filesystem::path output_dir = "khcv_out";
  bool dump_intermediates = false;
  bool export_pgm = false;

  NoiseModel noise() const;
  void validate() const;
};

// Relative paths inside the document are resolved against base_dir.
PipelineConfig config_from_json(const nlohmann::json& doc,
                                const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const PipelineConfig& config);

nlohmann::json flow_params_to_json(const FlowParams& p);
nlohmann::json gap_tv_params_to_json(const GapTvParams& p);
nlohmann::json fusion_params_to_json(const FusionParams& p);

// Measurement files listed by a manifest, relative to the manifest's folder.
struct MeasurementManifest {
  std::filesystem::path y = "y.khcv";
  std::filesystem::path z_left = "z_left.khcv";
  std::filesystem::path z_right = "z_right.khcv";
  std::filesystem::path masks = "masks.khcv";
  std::filesystem::path ground_truth = "ground_truth.khcv";  // empty when absent
  TimingSchedule schedule;
  int gap_frames = 0;
  std::uint64_t seed = 0;
  std::uint64_t noise_seed = 0;
  double noise_sigma = 0.0;
};

nlohmann::json manifest_to_json(const MeasurementManifest& m);
MeasurementManifest manifest_from_json(const nlohmann::json& doc);

// Writes the measurement files plus manifest.json into dir.
void save_measurement(const HybridMeasurement& m, const VideoCube* ground_truth,
                      const MeasurementManifest& manifest, const std::filesystem::path& dir);

struct LoadedMeasurement {
  HybridMeasurement measurement;
  std::optional<VideoCube> ground_truth;
  MeasurementManifest manifest;
};

LoadedMeasurement load_measurement(const std::filesystem::path& manifest_path);

struct SimulationOutput {
  HybridMeasurement measurement;
  VideoCube ground_truth;  // the B frames that were encoded
  MeasurementManifest manifest;
};

// Loads the scene and simulates one hybrid capture from its central block.
SimulationOutput simulate_from_config(const PipelineConfig& config);

struct PipelineResult {
  MetricReport intermediate;
  MetricReport fused;
  nlohmann::json summary;
  std::size_t uncovered_pixels = 0;
};

// Runs every stage and writes:
//   measurement/{y,z_left,z_right,masks,ground_truth}.khcv, manifest.json
//   intermediate.khcv, fused.khcv
//   metrics_{intermediate,fused}.{json,csv}, summary.json
// plus diagnostics/ when dump_intermediates is set.
PipelineResult run_pipeline(const PipelineConfig& config);

struct SweepRow {
  int gap_frames = 0;
  double gap_ratio = 0.0;  // gap_frames / B
  double mean_psnr_db = 0.0;
  double mean_ssim = 0.0;
  double intermediate_psnr_db = 0.0;
  double intermediate_ssim = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

// One full pipeline run per gap (sorted ascending) under
// output_dir/gap_<n>; writes sweep.csv and sweep.json into output_dir.
SweepResult sweep_frame_gap(const PipelineConfig& config, std::vector<int> gaps);

nlohmann::json sweep_to_json(const SweepResult& result);
std::string sweep_to_csv(const SweepResult& result);

// PSNR / SSIM / L1 between two same-shaped frames or cubes.
MetricReport compare_files(const std::filesystem::path& a, const std::filesystem::path& b);

// Writes a diagnostics folder for one fused frame: flows (KHCV + PPM),
// warped keys and visibility map (PGM).
void dump_fusion_trace(const FusionTrace& trace, int k, const std::filesystem::path& dir);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace khcv

#endif  // KHCV_PIPELINE_HPP_
