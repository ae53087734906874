#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "khcv/capture.hpp"
#include "khcv/flow.hpp"
#include "khcv/fusion.hpp"
#include "khcv/gap_tv.hpp"
#include "khcv/metrics.hpp"
#include "khcv/pipeline.hpp"
#include "khcv/scenes.hpp"
#include "khcv/tensor_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> mask_seed;
  std::optional<std::uint64_t> noise_seed;
  std::optional<double> noise_sigma;
  std::optional<int> gap_frames;
  bool dump = false;
};

void add_config_flags(CLI::App* cmd, Overrides& o, bool config_required) {
  auto* opt = cmd->add_option("--config", o.config, "JSON run configuration");
  if (config_required) opt->required();
  cmd->add_option("--seed,--mask-seed", o.mask_seed, "override the mask seed");
  cmd->add_option("--noise-seed", o.noise_seed, "override the noise seed");
  cmd->add_option("--noise-sigma", o.noise_sigma, "override the noise standard deviation");
  cmd->add_option("--gap", o.gap_frames, "override gap_frames");
}

khcv::PipelineConfig resolve_config(const Overrides& o) {
  khcv::PipelineConfig c;
  try {
    if (!o.config.empty()) c = khcv::load_config(o.config);
    if (o.mask_seed) c.mask_seed = *o.mask_seed;
    if (o.noise_seed) c.noise_seed = *o.noise_seed;
    if (o.noise_sigma) c.noise_sigma = *o.noise_sigma;
    if (o.gap_frames) c.gap_frames = *o.gap_frames;
    if (!o.out.empty()) c.output_dir = o.out;
    if (o.dump) c.dump_intermediates = true;
    c.validate();
  } catch (const khcv::StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw khcv::StageError("config", khcv::exit_code_for(e), e.what());
  }
  return c;
}

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const khcv::StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw khcv::StageError(name, khcv::exit_code_for(e), e.what());
  }
}

void print_report(const khcv::MetricReport& r) {
  std::cout << r.label << ": mean PSNR " << khcv::format_number(r.mean.psnr_db) << " dB, SSIM "
            << khcv::format_number(r.mean.ssim) << ", L1 " << khcv::format_number(r.mean.l1)
            << " over " << r.per_frame.size() << " frame(s)\n";
}

void write_report(const khcv::MetricReport& r, const fs::path& json_path) {
  if (json_path.has_parent_path()) fs::create_directories(json_path.parent_path());
  khcv::write_text(json_path, khcv::report_to_json(r).dump(2) + "\n");
  fs::path csv = json_path;
  csv.replace_extension(".csv");
  khcv::write_text(csv, khcv::report_to_csv(r));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Key-frame-assisted hybrid snapshot compressive video toolkit", "khcv"};
  app.require_subcommand(1);

  Overrides sim_o;
  auto* sim = app.add_subcommand("simulate", "simulate a hybrid capture from a scene");
  add_config_flags(sim, sim_o, true);
  sim->add_option("--out", sim_o.out, "measurement directory")->required();

  Overrides rec_o;
  std::string rec_manifest;
  auto* rec = app.add_subcommand("reconstruct", "GAP-TV intermediate reconstruction");
  rec->add_option("--manifest", rec_manifest, "measurement manifest.json")->required();
  rec->add_option("--config", rec_o.config, "JSON configuration for solver parameters");
  rec->add_option("--out", rec_o.out, "output KHCV cube")->required();

  Overrides fuse_o;
  std::string fuse_manifest, fuse_intermediate;
  auto* fuse = app.add_subcommand("fuse", "fuse an intermediate video with the key frames");
  fuse->add_option("--manifest", fuse_manifest, "measurement manifest.json")->required();
  fuse->add_option("--intermediate", fuse_intermediate, "intermediate KHCV cube")->required();
  fuse->add_option("--config", fuse_o.config, "JSON configuration for fusion parameters");
  fuse->add_option("--out", fuse_o.out, "output KHCV cube")->required();
  fuse->add_flag("--dump-intermediates", fuse_o.dump, "write per-frame flows, warps and maps");

  Overrides pipe_o;
  auto* pipe = app.add_subcommand("pipeline", "simulate, reconstruct, fuse and score");
  add_config_flags(pipe, pipe_o, true);
  pipe->add_option("--out", pipe_o.out, "output directory");
  pipe->add_flag("--dump-intermediates", pipe_o.dump, "write per-frame flows, warps and maps");

  Overrides sweep_o;
  std::vector<int> gaps{0, 1, 2, 3, 4};
  auto* sweep = app.add_subcommand("sweep", "frame-gap robustness sweep");
  add_config_flags(sweep, sweep_o, true);
  sweep->add_option("--out", sweep_o.out, "output directory");
  sweep->add_option("--gaps", gaps, "gap values in frames")->delimiter(',');
  sweep->add_flag("--dump-intermediates", sweep_o.dump, "write per-frame flows, warps and maps");

  std::string met_a, met_b, met_out;
  auto* met = app.add_subcommand("metrics", "PSNR / SSIM / L1 between two KHCV files");
  met->add_option("a", met_a, "estimate")->required();
  met->add_option("b", met_b, "reference")->required();
  met->add_option("--out", met_out, "JSON report path (a CSV is written next to it)");

  std::string fv_flow, fv_target, fv_source, fv_out, fv_flow_out;
  std::optional<double> fv_max;
  auto* fv = app.add_subcommand("flowviz", "color-code a flow field");
  fv->add_option("--flow", fv_flow, "KHCV flow field");
  fv->add_option("--target", fv_target, "target frame (KHCV) to estimate flow onto");
  fv->add_option("--source", fv_source, "source frame (KHCV) warped onto the target");
  fv->add_option("--out", fv_out, "output PPM")->required();
  fv->add_option("--flow-out", fv_flow_out, "also save the estimated flow as KHCV");
  fv->add_option("--max", fv_max, "magnitude mapped to full saturation");

  std::string ms_kind = "texture", ms_out;
  int ms_h = 128, ms_w = 128, ms_frames = 26, ms_side = 24;
  double ms_vx = 0.5, ms_vy = 0.25;
  std::uint64_t ms_seed = 11;
  auto* ms = app.add_subcommand("make-scene", "write a synthetic KHCV scene");
  ms->add_option("--kind", ms_kind, "texture | square | static")
      ->check(CLI::IsMember({"texture", "square", "static"}));
  ms->add_option("--height", ms_h)->check(CLI::PositiveNumber);
  ms->add_option("--width", ms_w)->check(CLI::PositiveNumber);
  ms->add_option("--frames", ms_frames)->check(CLI::PositiveNumber);
  ms->add_option("--vx", ms_vx, "pixels per frame");
  ms->add_option("--vy", ms_vy, "pixels per frame");
  ms->add_option("--side", ms_side, "square side")->check(CLI::PositiveNumber);
  ms->add_option("--seed", ms_seed, "texture seed");
  ms->add_option("--out", ms_out, "output KHCV file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return khcv::kExitConfig;
  }

  try {
    if (*sim) {
      const auto config = resolve_config(sim_o);
      stage("simulate", [&] {
        const auto s = khcv::simulate_from_config(config);
        khcv::save_measurement(s.measurement, &s.ground_truth, s.manifest, config.output_dir);
        std::cout << "measurement written to " << config.output_dir.string() << "\n";
      });
    } else if (*rec) {
      const auto config = resolve_config(rec_o);
      const auto loaded = stage("load", [&] { return khcv::load_measurement(rec_manifest); });
      const auto result = stage("reconstruct", [&] {
        auto r = khcv::gap_tv_reconstruct_detailed(loaded.measurement.y, loaded.measurement.masks,
                                                   config.gap_tv);
        khcv::save_tensor(r.video, rec_o.out);
        return r;
      });
      if (result.uncovered_pixels > 0) {
        std::cerr << "warning: " << result.uncovered_pixels
                  << " pixel(s) have no open mask in any frame\n";
      }
      if (loaded.ground_truth) {
        print_report(stage("score", [&] {
          return khcv::evaluate_video(result.video, *loaded.ground_truth, "intermediate");
        }));
      }
    } else if (*fuse) {
      const auto config = resolve_config(fuse_o);
      const auto loaded = stage("load", [&] { return khcv::load_measurement(fuse_manifest); });
      const auto x_mid = stage("load", [&] {
        return khcv::load_tensor_as<khcv::VideoCube>(fuse_intermediate);
      });
      const auto fused = stage("fuse", [&] {
        std::vector<khcv::FusionTrace> traces;
        auto f = khcv::fuse_video(loaded.measurement, x_mid, config.fusion,
                                  fuse_o.dump ? &traces : nullptr);
        khcv::save_tensor(f, fuse_o.out);
        fs::path diag = fs::path(fuse_o.out).parent_path() / "diagnostics";
        for (std::size_t k = 0; k < traces.size(); ++k) {
          khcv::dump_fusion_trace(traces[k], static_cast<int>(k + 1), diag);
        }
        return f;
      });
      if (loaded.ground_truth) {
        print_report(stage("score", [&] {
          return khcv::evaluate_video(fused, *loaded.ground_truth, "fused");
        }));
      }
    } else if (*pipe) {
      const auto config = resolve_config(pipe_o);
      const auto result = khcv::run_pipeline(config);
      print_report(result.intermediate);
      print_report(result.fused);
      std::cout << "outputs in " << config.output_dir.string() << "\n";
    } else if (*sweep) {
      const auto config = resolve_config(sweep_o);
      const auto result = khcv::sweep_frame_gap(config, gaps);
      std::cout << khcv::sweep_to_csv(result);
    } else if (*met) {
      const auto report = stage("metrics", [&] { return khcv::compare_files(met_a, met_b); });
      std::cout << khcv::report_to_json(report).dump(2) << "\n";
      if (!met_out.empty()) stage("write", [&] { write_report(report, met_out); });
    } else if (*fv) {
      stage("flowviz", [&] {
        khcv::FlowField flow;
        if (!fv_flow.empty()) {
          if (!fv_target.empty() || !fv_source.empty()) {
            throw khcv::ConfigError("give either --flow or --target/--source, not both");
          }
          flow = khcv::load_tensor_as<khcv::FlowField>(fv_flow);
        } else {
          if (fv_target.empty() || fv_source.empty()) {
            throw khcv::ConfigError("flowviz needs --flow or both --target and --source");
          }
          flow = khcv::estimate_flow(khcv::load_tensor_as<khcv::Frame>(fv_target),
                                     khcv::load_tensor_as<khcv::Frame>(fv_source));
          if (!fv_flow_out.empty()) khcv::save_tensor(flow, fv_flow_out);
        }
        khcv::export_ppm(khcv::flow_to_color(flow, fv_max), fv_out);
        std::cout << "mean flow magnitude " << khcv::format_number(khcv::mean_flow_magnitude(flow))
                  << " px\n";
      });
    } else if (*ms) {
      stage("make-scene", [&] {
        khcv::VideoCube scene;
        if (ms_kind == "texture") {
          scene = khcv::translating_texture(ms_h, ms_w, ms_frames, ms_vx, ms_vy, ms_seed);
        } else if (ms_kind == "square") {
          scene = khcv::moving_square(ms_h, ms_w, ms_frames, ms_side, ms_vx, ms_vy);
        } else {
          scene = khcv::static_smooth_scene(ms_h, ms_w, ms_frames);
        }
        khcv::save_tensor(scene, ms_out);
      });
    }
  } catch (const std::exception& e) {
    std::cerr << "khcv: error: " << e.what() << "\n";
    const int code = khcv::exit_code_for(e);
    return code == khcv::kExitOk ? khcv::kExitFailure : code;
  }
  return khcv::kExitOk;
}
