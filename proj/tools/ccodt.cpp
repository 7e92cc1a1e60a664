// Command-line front end: one subcommand per pipeline stage plus `pipeline`,
// which chains them.

#include "ccodt/io.hpp"
#include "ccodt/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>

using namespace ccodt;
using ojson = nlohmann::ordered_json;

namespace {

struct Common {
  std::string config;
  std::string log_level = "info";
};

PipelineConfig config_of(const Common& c) { return c.config.empty() ? PipelineConfig{} : load_config(c.config); }

void write_json(const std::string& path, const ojson& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

void require_file(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw Error("missing input file: " + path);
}

Phantom phantom_from_file(const std::string& path) {
  require_file(path);
  VolumeMeta meta;
  const ComplexVolume v = read_volume(path, &meta);
  Phantom p;
  p.n = real_part(v);
  p.n0 = meta.n0;
  p.wavelength = meta.wavelength;
  return p;
}

Mat3 parse_change(const std::vector<double>& v) {
  if (v.size() != 9) throw Error("--change needs nine numbers (row-major 3x3)");
  Mat3 m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = v[i];
  if ((m.transpose() * m - Mat3::Identity()).norm() > 1e-6) throw Error("--change must be orthogonal");
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rotation estimation and refractive-index reconstruction for optical diffraction tomography"};
  app.require_subcommand(1);
  Common common;
  app.add_option("-c,--config", common.config, "pipeline configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--log-level", common.log_level, "trace|debug|info|warn|error|off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::string out, in, phantom_path, traj_path, init_path, truth_path, volume_path, metrics_path, png_dir;
  std::optional<double> snr;
  std::optional<std::uint64_t> seed;
  std::string method;
  std::vector<double> change;

  auto* phantom = app.add_subcommand("phantom", "rasterize the phantom refractive index");
  phantom->add_option("-o,--out", out, "volume file (.odts)")->required();

  auto* simulate = app.add_subcommand("simulate", "simulate total fields for the ground-truth motion");
  simulate->add_option("--phantom", phantom_path, "refractive-index volume; default: generated from the config");
  simulate->add_option("--trajectory", traj_path, "motion to simulate; default: the config's truth");
  simulate->add_option("--truth-out", truth_path, "write the simulated trajectory here");
  simulate->add_option("-o,--out", out, "stack file (.odts)")->required();

  auto* noise = app.add_subcommand("noise", "add Gaussian noise and phase drift");
  noise->add_option("-i,--in", in, "total-field stack")->required();
  noise->add_option("--snr", snr, "SNR in dB relative to the scattered field (overrides the config)");
  noise->add_option("--seed", seed, "noise seed (overrides the config)");
  noise->add_option("-o,--out", out, "stack file")->required();

  auto* prep = app.add_subcommand("preprocess", "total fields to transformed measurements");
  prep->add_option("-i,--in", in, "total-field stack")->required();
  prep->add_option("-o,--out", out, "stack file")->required();

  auto* estimate = app.add_subcommand("estimate", "estimate the rotation trajectory");
  estimate->add_option("-i,--in", in, "measurement stack")->required();
  estimate->add_option("--method", method, "infinitesimal|direct|both (overrides the config)")
      ->check(CLI::IsMember({"infinitesimal", "direct", "both"}));
  estimate->add_option("--init", init_path, "initial trajectory for the direct method");
  estimate->add_option("--metrics", metrics_path, "stage summary (JSON)");
  estimate->add_option("-o,--out", out, "trajectory (.csv or .json)")->required();

  auto* reconstruct = app.add_subcommand("reconstruct", "invert the Fourier samples for f and n");
  reconstruct->add_option("-i,--in", in, "measurement stack")->required();
  reconstruct->add_option("-t,--trajectory", traj_path, "rotation trajectory")->required();
  reconstruct->add_option("--change", change, "coordinate change C applied as C R C^T on import")->expected(9);
  reconstruct->add_option("--n-out", volume_path, "refractive-index volume file");
  reconstruct->add_option("--png-dir", png_dir, "export central slices of n as PNG");
  reconstruct->add_option("--metrics", metrics_path, "stage summary (JSON)");
  reconstruct->add_option("-o,--out", out, "scattering-potential volume file")->required();

  auto* evaluate = app.add_subcommand("evaluate", "compare trajectories and volumes with references");
  evaluate->add_option("-t,--trajectory", traj_path, "estimated trajectory")->required();
  evaluate->add_option("--truth", truth_path, "reference trajectory")->required();
  evaluate->add_option("--change", change, "coordinate change C applied to the reference as C R C^T")->expected(9);
  evaluate->add_option("--volume", volume_path, "reconstructed scattering potential");
  evaluate->add_option("--phantom", phantom_path, "reference refractive index");
  evaluate->add_option("-o,--out", out, "metrics file (JSON)")->required();

  auto* pipeline = app.add_subcommand("pipeline", "run every stage and write a manifest");
  pipeline->add_option("-o,--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    ojson err;
    err["error"] = {{"command", "parse"}, {"message", e.what()}};
    std::cerr << err.dump() << '\n';
    return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("ccodt"));
  spdlog::set_level(spdlog::level::from_str(common.log_level));

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    PipelineConfig cfg = config_of(common);
    if (command == "phantom") {
      const Phantom p = make_phantom(cfg.phantom);
      ComplexVolume v(p.n.size(), p.n.pitch());
      for (std::size_t i = 0; i < v.count(); ++i) v[i] = p.n[i];
      write_volume(out, v, {p.wavelength, p.n0});
    } else if (command == "simulate") {
      const Phantom p = phantom_path.empty() ? make_phantom(cfg.phantom) : phantom_from_file(phantom_path);
      if (!phantom_path.empty()) {
        cfg.phantom.grid = p.n.size();
        cfg.phantom.pitch = p.n.pitch();
        cfg.phantom.n0 = p.n0;
        cfg.phantom.wavelength = p.wavelength;
      }
      RotationTrajectory truth;
      if (traj_path.empty()) {
        truth = cfg.truth();
      } else {
        require_file(traj_path);
        truth = read_trajectory(traj_path);
      }
      if (!truth_path.empty()) write_trajectory(truth_path, truth);
      write_stack(out, simulate_total(cfg, p, truth));
    } else if (command == "noise") {
      require_file(in);
      if (snr) cfg.snr_db = *snr;
      if (seed) cfg.noise_seed = *seed;
      write_stack(out, apply_noise(cfg, read_stack(in)));
    } else if (command == "preprocess") {
      require_file(in);
      write_stack(out, run_preprocess(cfg, read_stack(in)).m);
    } else if (command == "estimate") {
      require_file(in);
      if (method == "infinitesimal") cfg.method = EstimateMethod::Infinitesimal;
      if (method == "direct") cfg.method = EstimateMethod::Direct;
      if (method == "both") cfg.method = EstimateMethod::Both;
      const FieldStack m = read_stack(in);
      RotationTrajectory init;
      if (!init_path.empty()) {
        require_file(init_path);
        init = read_trajectory(init_path);
      }
      const EstimateResult r = run_estimate(cfg, m, init_path.empty() ? nullptr : &init);
      write_trajectory(out, r.trajectory);
      if (!metrics_path.empty()) {
        ojson j;
        j["schema_version"] = kMetricsSchemaVersion;
        j["frames"] = m.count();
        if (r.direct) {
          int converged = 0;
          for (const auto& p : r.direct->pairs) converged += p.converged;
          j["period"] = {{"frames", r.period}, {"estimated", r.period_estimated}};
          j["direct_pairs"] = {{"minimized", r.direct->pairs.size()}, {"converged", converged}};
        }
        write_json(metrics_path, j);
      }
    } else if (command == "reconstruct") {
      require_file(in);
      require_file(traj_path);
      Mat3 c;
      if (!change.empty()) c = parse_change(change);
      const FieldStack m = read_stack(in);
      const RotationTrajectory traj = read_trajectory(traj_path, change.empty() ? nullptr : &c);
      const ReconResult r = run_reconstruct(cfg, m, traj);
      const VolumeMeta meta{m.wavelength, m.n0};
      write_volume(out, r.cg.f, meta);
      if (!volume_path.empty()) {
        ComplexVolume nv(r.n.size(), r.n.pitch());
        for (std::size_t i = 0; i < nv.count(); ++i) nv[i] = r.n[i];
        write_volume(volume_path, nv, meta);
      }
      if (!png_dir.empty()) {
        std::filesystem::create_directories(png_dir);
        double lo = r.n[0], hi = r.n[0];
        for (double v : r.n.data()) lo = std::min(lo, v), hi = std::max(hi, v);
        if (hi <= lo) hi = lo + 1e-6;
        const char* names[] = {"slice_x1.png", "slice_x2.png", "slice_x3.png"};
        for (int axis = 0; axis < 3; ++axis)
          write_png_slice((std::filesystem::path(png_dir) / names[axis]).string(), r.n, axis, r.n.size() / 2, lo, hi);
      }
      if (!metrics_path.empty()) {
        ojson j;
        j["schema_version"] = kMetricsSchemaVersion;
        j["clamped_voxels"] = r.clamped;
        j["skipped_nodes"] = r.skipped;
        j["data_residual"] = r.cg.data_residual;
        write_json(metrics_path, j);
      }
    } else if (command == "evaluate") {
      require_file(traj_path);
      require_file(truth_path);
      Mat3 c;
      if (!change.empty()) c = parse_change(change);
      const RotationTrajectory est = read_trajectory(traj_path);
      const RotationTrajectory truth = read_trajectory(truth_path, change.empty() ? nullptr : &c);
      if (est.size() != truth.size()) throw Error("trajectory lengths differ");
      ojson j;
      j["schema_version"] = kMetricsSchemaVersion;
      j["frames"] = est.size();
      j["rotation"] = rotation_metrics(est, truth);
      j["mean_rotation_error_deg"] = j["rotation"]["mean_error_deg"];
      if (!volume_path.empty() || !phantom_path.empty()) {
        if (volume_path.empty() || phantom_path.empty()) throw Error("--volume and --phantom go together");
        require_file(volume_path);
        const Phantom p = phantom_from_file(phantom_path);
        const ComplexVolume f = read_volume(volume_path);
        if (f.size() != p.n.size()) throw Error("volume and phantom grids differ");
        j["reconstruction"] = volume_metrics(f, n_to_f(p));
      }
      write_json(out, j);
    } else if (command == "pipeline") {
      run_pipeline(cfg, out, common.config);
    }
  } catch (const std::exception& e) {
    ojson err;
    err["error"] = {{"command", command}, {"message", e.what()}};
    std::cerr << err.dump() << '\n';
    return 1;
  }
  return 0;
}
