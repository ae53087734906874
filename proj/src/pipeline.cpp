#include "khcv/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "khcv/tensor_io.hpp"

namespace khcv {
namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> known,
                         const std::string& where) {
  std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key \"" + key + "\"");
  }
}

const json& require_object(const json& doc, const std::string& where) {
  if (!doc.is_object()) throw ConfigError(where + " must be a JSON object");
  return doc;
}

template <typename T>
void read_number(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) {
      throw ConfigError(where + "." + key + " must be an integer");
    }
    if constexpr (std::is_unsigned_v<T>) {
      if (v.is_number_unsigned()) {
        out = v.get<T>();
      } else if (v.get<std::int64_t>() >= 0) {
        out = static_cast<T>(v.get<std::int64_t>());
      } else {
        throw ConfigError(where + "." + key + " must be non-negative");
      }
    } else {
      out = v.get<T>();
    }
  } else {
    if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
    out = v.get<T>();
  }
}

void read_bool(const json& obj, const char* key, bool& out, const std::string& where) {
  if (!obj.contains(key)) return;
  if (!obj.at(key).is_boolean()) throw ConfigError(where + "." + key + " must be true or false");
  out = obj.at(key).get<bool>();
}

FlowParams flow_params_from_json(const json& doc, FlowParams p, const std::string& where) {
  require_object(doc, where);
  reject_unknown_keys(doc, {"pyramid_levels", "alpha", "iters_per_level", "warps_per_level"}, where);
  read_number(doc, "pyramid_levels", p.pyramid_levels, where);
  read_number(doc, "alpha", p.alpha, where);
  read_number(doc, "iters_per_level", p.iters_per_level, where);
  read_number(doc, "warps_per_level", p.warps_per_level, where);
  return p;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

// Runs fn, converting library exceptions into a stage-tagged StageError.
template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, exit_code_for(e), e.what());
  }
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (const auto* stage = dynamic_cast<const StageError*>(&e)) return stage->exit_code();
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgumentError*>(&e) ||
      dynamic_cast<const json::exception*>(&e)) {
    return kExitConfig;
  }
  if (dynamic_cast<const NumericalError*>(&e)) return kExitNumerical;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const ShapeError*>(&e) || dynamic_cast<const std::filesystem::filesystem_error*>(&e)) {
    return kExitData;
  }
  return kExitFailure;
}

NoiseModel PipelineConfig::noise() const {
  if (noise_sigma > 0.0) return NoiseModel::gaussian(noise_sigma, noise_seed);
  return NoiseModel::none();
}

void PipelineConfig::validate() const {
  if (frames < 1) throw ConfigError("B must be >= 1");
  if (t_x_us <= 0) throw ConfigError("t_x_us must be positive");
  if (t_g_us < 0) throw ConfigError("t_g_us must be >= 0");
  if (gap_frames < 0) throw ConfigError("gap_frames must be >= 0");
  if (!(mask_density > 0.0 && mask_density <= 1.0)) throw ConfigError("mask density must be in (0, 1]");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  try {
    gap_tv.validate();
    fusion.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
}

json flow_params_to_json(const FlowParams& p) {
  return {{"pyramid_levels", p.pyramid_levels},
          {"alpha", p.alpha},
          {"iters_per_level", p.iters_per_level},
          {"warps_per_level", p.warps_per_level}};
}

json gap_tv_params_to_json(const GapTvParams& p) {
  return {{"outer_iters", p.outer_iters},
          {"tv_weight", p.tv_weight},
          {"tv_inner_iters", p.tv_inner_iters},
          {"epsilon_r", p.epsilon_r}};
}

json fusion_params_to_json(const FusionParams& p) {
  json j = {{"beta", p.beta},
            {"error_smooth_radius", p.error_smooth_radius},
            {"epsilon_blend", p.epsilon_blend},
            {"normalize_keys", p.normalize_keys},
            {"use_step_flows", p.use_step_flows},
            {"flow", flow_params_to_json(p.flow_params)}};
  j["fallback_threshold"] = p.fallback_threshold ? json(*p.fallback_threshold) : json(nullptr);
  return j;
}

json config_to_json(const PipelineConfig& c) {
  return {{"scene", c.scene.string()},
          {"B", c.frames},
          {"t_x_us", c.t_x_us},
          {"t_g_us", c.t_g_us},
          {"gap_frames", c.gap_frames},
          {"mask", {{"seed", c.mask_seed}, {"density", c.mask_density}}},
          {"noise", {{"sigma", c.noise_sigma}, {"seed", c.noise_seed}}},
          {"gap_tv", gap_tv_params_to_json(c.gap_tv)},
          {"fusion", fusion_params_to_json(c.fusion)},
          {"output_dir", c.output_dir.string()},
          {"dump_intermediates", c.dump_intermediates},
          {"export_pgm", c.export_pgm}};
}

PipelineConfig config_from_json(const json& doc, const std::filesystem::path& base_dir) {
  const std::string root = "config";
  require_object(doc, root);
  reject_unknown_keys(doc,
                      {"scene", "B", "t_x_us", "t_g_us", "gap_frames", "mask", "noise", "gap_tv",
                       "fusion", "output_dir", "dump_intermediates", "export_pgm"},
                      root);
  PipelineConfig c;
  if (doc.contains("scene")) {
    if (!doc["scene"].is_string()) throw ConfigError("config.scene must be a path string");
    c.scene = resolve(base_dir, doc["scene"].get<std::string>());
  }
  if (doc.contains("output_dir")) {
    if (!doc["output_dir"].is_string()) throw ConfigError("config.output_dir must be a path string");
    c.output_dir = resolve(base_dir, doc["output_dir"].get<std::string>());
  }
  read_number(doc, "B", c.frames, root);
  read_number(doc, "t_x_us", c.t_x_us, root);
  read_number(doc, "t_g_us", c.t_g_us, root);
  read_number(doc, "gap_frames", c.gap_frames, root);
  read_bool(doc, "dump_intermediates", c.dump_intermediates, root);
  read_bool(doc, "export_pgm", c.export_pgm, root);

  if (doc.contains("mask")) {
    const json& m = require_object(doc["mask"], "config.mask");
    reject_unknown_keys(m, {"seed", "density"}, "config.mask");
    read_number(m, "seed", c.mask_seed, "config.mask");
    read_number(m, "density", c.mask_density, "config.mask");
  }
  if (doc.contains("noise")) {
    const json& n = require_object(doc["noise"], "config.noise");
    reject_unknown_keys(n, {"sigma", "seed"}, "config.noise");
    read_number(n, "sigma", c.noise_sigma, "config.noise");
    read_number(n, "seed", c.noise_seed, "config.noise");
  }
  if (doc.contains("gap_tv")) {
    const json& g = require_object(doc["gap_tv"], "config.gap_tv");
    reject_unknown_keys(g, {"outer_iters", "tv_weight", "tv_inner_iters", "epsilon_r"},
                        "config.gap_tv");
    read_number(g, "outer_iters", c.gap_tv.outer_iters, "config.gap_tv");
    read_number(g, "tv_weight", c.gap_tv.tv_weight, "config.gap_tv");
    read_number(g, "tv_inner_iters", c.gap_tv.tv_inner_iters, "config.gap_tv");
    read_number(g, "epsilon_r", c.gap_tv.epsilon_r, "config.gap_tv");
  }
  if (doc.contains("fusion")) {
    const std::string where = "config.fusion";
    const json& f = require_object(doc["fusion"], where);
    reject_unknown_keys(f,
                        {"beta", "error_smooth_radius", "epsilon_blend", "fallback_threshold",
                         "normalize_keys", "use_step_flows", "flow"},
                        where);
    read_number(f, "beta", c.fusion.beta, where);
    read_number(f, "error_smooth_radius", c.fusion.error_smooth_radius, where);
    read_number(f, "epsilon_blend", c.fusion.epsilon_blend, where);
    read_bool(f, "normalize_keys", c.fusion.normalize_keys, where);
    read_bool(f, "use_step_flows", c.fusion.use_step_flows, where);
    if (f.contains("fallback_threshold")) {
      if (f["fallback_threshold"].is_null()) {
        c.fusion.fallback_threshold.reset();
      } else {
        double t = 0.0;
        read_number(f, "fallback_threshold", t, where);
        c.fusion.fallback_threshold = t;
      }
    }
    if (f.contains("flow")) {
      c.fusion.flow_params = flow_params_from_json(f["flow"], c.fusion.flow_params, where + ".flow");
    }
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(doc, path.parent_path());
}

json manifest_to_json(const MeasurementManifest& m) {
  json j = {{"y", m.y.string()},
            {"z_left", m.z_left.string()},
            {"z_right", m.z_right.string()},
            {"masks", m.masks.string()},
            {"t_x", m.schedule.t_x_us},
            {"t_y", m.schedule.t_y_us},
            {"t_z", m.schedule.t_z_us},
            {"t_g", m.schedule.t_g_us},
            {"B", m.schedule.frames},
            {"gap_frames", m.gap_frames},
            {"seed", m.seed},
            {"noise", {{"sigma", m.noise_sigma}, {"seed", m.noise_seed}}}};
  if (!m.ground_truth.empty()) j["ground_truth"] = m.ground_truth.string();
  return j;
}

MeasurementManifest manifest_from_json(const json& doc) {
  const std::string where = "manifest";
  require_object(doc, where);
  MeasurementManifest m;
  auto path_field = [&](const char* key, std::filesystem::path& out, bool required) {
    if (!doc.contains(key)) {
      if (required) throw ConfigError(where + " is missing \"" + key + "\"");
      out.clear();
      return;
    }
    if (!doc[key].is_string()) throw ConfigError(where + "." + key + " must be a path string");
    out = doc[key].get<std::string>();
  };
  path_field("y", m.y, true);
  path_field("z_left", m.z_left, true);
  path_field("z_right", m.z_right, true);
  path_field("masks", m.masks, true);
  path_field("ground_truth", m.ground_truth, false);
  for (const char* key : {"t_x", "t_y", "t_z", "t_g", "B", "gap_frames"}) {
    if (!doc.contains(key)) throw ConfigError(where + " is missing \"" + key + "\"");
  }
  read_number(doc, "t_x", m.schedule.t_x_us, where);
  read_number(doc, "t_y", m.schedule.t_y_us, where);
  read_number(doc, "t_z", m.schedule.t_z_us, where);
  read_number(doc, "t_g", m.schedule.t_g_us, where);
  read_number(doc, "B", m.schedule.frames, where);
  read_number(doc, "gap_frames", m.gap_frames, where);
  read_number(doc, "seed", m.seed, where);
  if (doc.contains("noise")) {
    read_number(doc["noise"], "sigma", m.noise_sigma, where + ".noise");
    read_number(doc["noise"], "seed", m.noise_seed, where + ".noise");
  }
  if (m.schedule.frames < 1 || m.schedule.t_x_us <= 0 ||
      m.schedule.t_y_us != m.schedule.t_x_us * m.schedule.frames ||
      m.schedule.t_z_us != m.schedule.t_x_us || m.schedule.t_g_us < 0) {
    throw ConfigError(where + ": inconsistent timing (need t_y = B*t_x, t_z = t_x, t_g >= 0)");
  }
  return m;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void save_measurement(const HybridMeasurement& m, const VideoCube* ground_truth,
                      const MeasurementManifest& manifest, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_tensor(m.y, dir / manifest.y);
  save_tensor(m.z_left, dir / manifest.z_left);
  save_tensor(m.z_right, dir / manifest.z_right);
  save_tensor(m.masks, dir / manifest.masks);
  MeasurementManifest written = manifest;
  if (ground_truth != nullptr && !manifest.ground_truth.empty()) {
    save_tensor(*ground_truth, dir / manifest.ground_truth);
  } else {
    written.ground_truth.clear();
  }
  write_text(dir / "manifest.json", manifest_to_json(written).dump(2) + "\n");
}

LoadedMeasurement load_measurement(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(manifest_path.string() + ": " + e.what());
  }
  LoadedMeasurement out;
  out.manifest = manifest_from_json(doc);
  const auto dir = manifest_path.parent_path();
  auto& m = out.measurement;
  m.y = load_tensor_as<Frame>(resolve(dir, out.manifest.y));
  m.z_left = load_tensor_as<Frame>(resolve(dir, out.manifest.z_left));
  m.z_right = load_tensor_as<Frame>(resolve(dir, out.manifest.z_right));
  m.masks = load_tensor_as<CodingCube>(resolve(dir, out.manifest.masks));
  m.schedule = out.manifest.schedule;
  m.gap_frames = out.manifest.gap_frames;
  if (m.masks.frames() != m.schedule.frames) {
    throw ShapeError("manifest B=" + std::to_string(m.schedule.frames) + " but masks hold " +
                     std::to_string(m.masks.frames()) + " frames");
  }
  require_same_shape(m.y, m.z_left, "measurement");
  require_same_shape(m.y, m.z_right, "measurement");
  if (!m.masks.same_plane_shape(m.y)) throw ShapeError("measurement: mask shape differs from y");
  if (!out.manifest.ground_truth.empty()) {
    out.ground_truth = load_tensor_as<VideoCube>(resolve(dir, out.manifest.ground_truth));
  }
  return out;
}

SimulationOutput simulate_from_config(const PipelineConfig& config) {
  const VideoCube scene = load_scene(config.scene);
  const int needed = config.frames + 2 + 2 * config.gap_frames;
  if (scene.frames() < needed) {
    throw ShapeError("scene has " + std::to_string(scene.frames()) + " frames, B=" +
                     std::to_string(config.frames) + " with gap " +
                     std::to_string(config.gap_frames) + " needs at least " + std::to_string(needed));
  }
  const TimingSchedule schedule = build_schedule(config.t_x_us, config.frames, config.t_g_us);
  const CodingCube masks = generate_masks(config.mask_seed, scene.height(), scene.width(),
                                          config.frames, config.mask_density);
  const int start = centered_block_start(scene.frames(), config.frames);
  SimulationOutput out;
  out.measurement = simulate_capture(scene, masks, schedule, config.gap_frames, config.noise(), start);
  out.ground_truth = slice_frames(scene, start, config.frames);
  out.manifest.schedule = schedule;
  out.manifest.gap_frames = config.gap_frames;
  out.manifest.seed = config.mask_seed;
  out.manifest.noise_seed = config.noise_seed;
  out.manifest.noise_sigma = config.noise_sigma;
  return out;
}

void dump_fusion_trace(const FusionTrace& trace, int k, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  char prefix[32];
  std::snprintf(prefix, sizeof(prefix), "frame_%04d_", k);
  const std::string p = prefix;
  const std::pair<const char*, const FlowField*> flows[] = {
      {"flow_left", &trace.flow_left},
      {"flow_right", &trace.flow_right},
      {"flow_left_refined", &trace.refined_left},
      {"flow_right_refined", &trace.refined_right},
  };
  for (const auto& [name, flow] : flows) {
    save_tensor(*flow, dir / (p + name + ".khcv"));
    export_ppm(flow_to_color(*flow), dir / (p + name + ".ppm"));
  }
  export_pgm(trace.warped_left, dir / (p + "warped_left.pgm"));
  export_pgm(trace.warped_right, dir / (p + "warped_right.pgm"));
  export_pgm(trace.visibility.values, dir / (p + "visibility.pgm"));
  export_pgm(trace.fallback_mask, dir / (p + "fallback.pgm"));
}

PipelineResult run_pipeline(const PipelineConfig& config) {
  in_stage("config", [&] { config.validate(); });
  const auto out_dir = config.output_dir;

  SimulationOutput sim = in_stage("simulate", [&] {
    SimulationOutput s = simulate_from_config(config);
    save_measurement(s.measurement, &s.ground_truth, s.manifest, out_dir / "measurement");
    return s;
  });

  GapTvResult recon = in_stage("reconstruct", [&] {
    GapTvResult r = gap_tv_reconstruct_detailed(sim.measurement.y, sim.measurement.masks, config.gap_tv);
    save_tensor(r.video, out_dir / "intermediate.khcv");
    return r;
  });

  VideoCube fused = in_stage("fuse", [&] {
    std::vector<FusionTrace> traces;
    VideoCube f = fuse_video(sim.measurement, recon.video, config.fusion,
                             config.dump_intermediates ? &traces : nullptr);
    save_tensor(f, out_dir / "fused.khcv");
    for (std::size_t k = 0; k < traces.size(); ++k) {
      dump_fusion_trace(traces[k], static_cast<int>(k + 1), out_dir / "diagnostics");
    }
    if (config.export_pgm) {
      export_pgm_sequence(f, out_dir / "fused_pgm");
      export_pgm_sequence(recon.video, out_dir / "intermediate_pgm");
    }
    return f;
  });

  return in_stage("score", [&] {
    PipelineResult result;
    // Only the B reconstructed frames are scored, never the key frames.
    result.intermediate = evaluate_video(recon.video, sim.ground_truth, "intermediate");
    result.fused = evaluate_video(fused, sim.ground_truth, "fused");
    result.uncovered_pixels = recon.uncovered_pixels;

    json& s = result.summary;
    s["config"] = config_to_json(config);
    s["per_frame"] = json::array();
    for (const auto& f : result.fused.per_frame) s["per_frame"].push_back(score_to_json(f));
    s["mean"] = score_to_json(result.fused.mean, false);
    s["intermediate_per_frame"] = json::array();
    for (const auto& f : result.intermediate.per_frame) {
      s["intermediate_per_frame"].push_back(score_to_json(f));
    }
    s["intermediate_mean"] = score_to_json(result.intermediate.mean, false);
    s["lpips"] = "unavailable";
    s["schedule"] = {{"t_x_us", sim.manifest.schedule.t_x_us},
                     {"t_y_us", sim.manifest.schedule.t_y_us},
                     {"t_z_us", sim.manifest.schedule.t_z_us},
                     {"t_g_us", sim.manifest.schedule.t_g_us},
                     {"B", sim.manifest.schedule.frames},
                     {"gap_frames", config.gap_frames},
                     {"gap_ratio", skipped_frame_gap_ratio(config.gap_frames, config.frames)},
                     {"compressive_ratio", compressive_ratio(config.frames)}};
    s["coverage"] = {{"uncovered_pixels", recon.uncovered_pixels}};

    write_text(out_dir / "metrics_intermediate.json", report_to_json(result.intermediate).dump(2) + "\n");
    write_text(out_dir / "metrics_intermediate.csv", report_to_csv(result.intermediate));
    write_text(out_dir / "metrics_fused.json", report_to_json(result.fused).dump(2) + "\n");
    write_text(out_dir / "metrics_fused.csv", report_to_csv(result.fused));
    write_text(out_dir / "summary.json", s.dump(2) + "\n");
    return result;
  });
}

json sweep_to_json(const SweepResult& result) {
  json rows = json::array();
  for (const auto& r : result.rows) {
    rows.push_back({{"gap_frames", r.gap_frames},
                    {"gap_ratio", r.gap_ratio},
                    {"mean_psnr_db", psnr_to_json(r.mean_psnr_db)},
                    {"mean_ssim", r.mean_ssim},
                    {"intermediate_psnr_db", psnr_to_json(r.intermediate_psnr_db)},
                    {"intermediate_ssim", r.intermediate_ssim}});
  }
  return {{"rows", rows}};
}

std::string sweep_to_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "gap_frames,gap_ratio,mean_psnr_db,mean_ssim,intermediate_psnr_db,intermediate_ssim\n";
  for (const auto& r : result.rows) {
    out << r.gap_frames << ',' << format_number(r.gap_ratio) << ',' << format_number(r.mean_psnr_db)
        << ',' << format_number(r.mean_ssim) << ',' << format_number(r.intermediate_psnr_db) << ','
        << format_number(r.intermediate_ssim) << '\n';
  }
  return out.str();
}

SweepResult sweep_frame_gap(const PipelineConfig& config, std::vector<int> gaps) {
  in_stage("config", [&] {
    config.validate();
    if (gaps.empty()) throw ConfigError("sweep needs at least one gap value");
    for (int g : gaps) {
      if (g < 0) throw ConfigError("gap values must be >= 0");
    }
  });
  std::ranges::sort(gaps);
  gaps.erase(std::unique(gaps.begin(), gaps.end()), gaps.end());

  in_stage("simulate", [&] {
    const VideoCube scene = load_scene(config.scene);
    const int needed = config.frames + 2 + 2 * gaps.back();
    if (scene.frames() < needed) {
      throw ShapeError("scene has " + std::to_string(scene.frames()) +
                       " frames, the largest gap needs " + std::to_string(needed));
    }
  });

  SweepResult result;
  for (int g : gaps) {
    PipelineConfig row_config = config;
    row_config.gap_frames = g;
    row_config.output_dir = config.output_dir / ("gap_" + std::to_string(g));
    const PipelineResult r = run_pipeline(row_config);
    result.rows.push_back({g, skipped_frame_gap_ratio(g, config.frames), r.fused.mean.psnr_db,
                           r.fused.mean.ssim, r.intermediate.mean.psnr_db, r.intermediate.mean.ssim});
  }
  in_stage("write", [&] {
    std::filesystem::create_directories(config.output_dir);
    write_text(config.output_dir / "sweep.csv", sweep_to_csv(result));
    write_text(config.output_dir / "sweep.json", sweep_to_json(result).dump(2) + "\n");
  });
  return result;
}

MetricReport compare_files(const std::filesystem::path& a, const std::filesystem::path& b) {
  const Tensor ta = load_tensor(a);
  const Tensor tb = load_tensor(b);
  if (const auto* fa = std::get_if<Frame>(&ta)) {
    const auto* fb = std::get_if<Frame>(&tb);
    if (fb == nullptr) {
      throw ShapeError(std::string("cannot compare a frame with a ") + tensor_kind_name(tb));
    }
    return evaluate_frame(*fa, *fb, "metrics");
  }
  if (const auto* ca = std::get_if<VideoCube>(&ta)) {
    const auto* cb = std::get_if<VideoCube>(&tb);
    if (cb == nullptr) {
      throw ShapeError(std::string("cannot compare a video cube with a ") + tensor_kind_name(tb));
    }
    return evaluate_video(*ca, *cb, "metrics");
  }
  throw ShapeError(std::string("metrics need frames or video cubes, got a ") + tensor_kind_name(ta));
}

}  // namespace khcv
