#include "ccodt/pipeline.hpp"

#include "ccodt/io.hpp"

#include <fftw3.h>
#include <openssl/crypto.h>
#include <png.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

namespace ccodt {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// Reads a JSON object field by field and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error("config: " + label() + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error("config: invalid value for " + where(key));
    }
  }

  void read_vec3(const char* key, Vec3& out) {
    std::vector<double> v;
    read(key, v);
    if (!j_.contains(key)) return;
    if (v.size() != 3) throw Error("config: " + where(key) + " needs three numbers");
    out = Vec3(v[0], v[1], v[2]);
  }

  template <typename E>
  void read_enum(const char* key, E& out, std::initializer_list<std::pair<const char*, E>> names) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (v.is_string())
      for (const auto& [name, value] : names)
        if (v.get<std::string>() == name) {
          out = value;
          return;
        }
    std::string allowed;
    for (const auto& [name, value] : names) allowed += std::string(allowed.empty() ? "" : "|") + name;
    throw Error("config: " + where(key) + " must be one of " + allowed);
  }

  // null or absent leaves the optional empty.
  void read_optional(const char* key, std::optional<double>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    double v = 0.0;
    read(key, v);
    out = v;
  }

  Section sub(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, path_.empty() ? key : path_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw Error("config: unknown key " + where(key.c_str()));
  }

 private:
  std::string label() const { return path_.empty() ? "root" : path_; }
  std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Error("config: " + what);
}

ojson vec3(const Vec3& v) { return ojson::array({v(0), v(1), v(2)}); }

const char* name(ForwardModel m) { return m == ForwardModel::Born ? "born" : "bpm"; }
const char* name(IncidentSource s) { return s == IncidentSource::Median ? "median" : "known"; }
const char* name(Linearization l) { return l == Linearization::Born ? "born" : "rytov"; }
const char* name(PhiDerivative d) { return d == PhiDerivative::Sobel ? "sobel" : "spectral"; }
const char* name(DensityWeights w) { return w == DensityWeights::Kappa ? "kappa" : "uniform"; }
const char* name(EstimateMethod m) {
  return m == EstimateMethod::Infinitesimal ? "infinitesimal" : m == EstimateMethod::Direct ? "direct" : "both";
}
const char* name(ReconTrajectory r) {
  return r == ReconTrajectory::True ? "true" : r == ReconTrajectory::Estimated ? "estimated" : "both";
}

void validate(const PipelineConfig& c) {
  const auto& p = c.phantom;
  require(c.band > 0 && c.band <= 1, "optics.band must lie in (0, 1]");
  require(p.grid > 0 && p.grid % 2 == 0, "phantom.grid must be positive and even");
  require(p.pitch > 0 && p.wavelength > 0 && p.n0 > 0, "pitch, wavelength and n0 must be positive");
  // Rotated hemisphere nodes reach |h| = k0 sqrt(2 (1 - sqrt(1 - band^2))) along
  // any axis of the volume grid, which must stay inside (-pi/p, pi/p).
  const double k0 = 2.0 * kPi * p.n0 / p.wavelength;
  const double h_max = k0 * std::sqrt(2.0 * (1.0 - std::sqrt(std::max(0.0, 1.0 - c.band * c.band))));
  require(p.pitch * h_max < kPi, "phantom.pitch too coarse for the Ewald sphere at this band");
  require(p.semi_axes.minCoeff() > 0 && p.bead_radius > 0, "phantom sizes must be positive");
  require(p.bead_count >= 0 && p.supersample >= 1, "phantom counts out of range");
  require(c.frames >= 3, "motion.frames must be at least 3");
  require(c.axis.norm() > 0, "motion.axis must be nonzero");
  require(std::isfinite(c.turns), "motion.turns must be finite");
  require(!c.snr_db || std::isfinite(*c.snr_db), "noise.snr_db must be finite");
  require(c.preprocess.smooth_sigma >= 0, "preprocess.smooth_sigma must be nonnegative");
  require(c.infinitesimal.half_angles > 0 && c.infinitesimal.radius_fraction > 0 &&
              c.infinitesimal.radius_fraction <= 1,
          "infinitesimal grid out of range");
  require(c.direct.lambda >= 0 && c.direct.quad_points > 0, "direct.lambda or quad_points out of range");
  require(c.oversample >= 1 && c.passes >= 1, "direct.oversample and passes must be positive");
  require(c.cg.iterations >= 0 && c.cg.tolerance >= 0, "reconstruct iterations and tolerance out of range");
}

std::string join(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

void write_json(const std::string& path, const ojson& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

ComplexVolume as_complex(const RealVolume& v) {
  ComplexVolume out(v.size(), v.pitch());
  for (std::size_t i = 0; i < v.count(); ++i) out[i] = v[i];
  return out;
}

}  // namespace

MeasurementGeometry PipelineConfig::geometry() const {
  MeasurementGeometry g;
  g.n = phantom.grid;
  g.pitch = phantom.pitch;
  g.wavelength = phantom.wavelength;
  g.n0 = phantom.n0;
  g.r_m = r_m;
  g.band = band;
  return g;
}

RotationTrajectory PipelineConfig::truth() const {
  return constant_rotation(frames, axis.normalized(), 2.0 * kPi * turns / frames, drift);
}

ojson to_json(const PipelineConfig& c) {
  const auto& p = c.phantom;
  ojson j;
  j["phantom"] = {{"grid", p.grid},
                  {"pitch", p.pitch},
                  {"semi_axes", vec3(p.semi_axes)},
                  {"n_ellipsoid", p.n_ellipsoid},
                  {"bead_count", p.bead_count},
                  {"bead_radius", p.bead_radius},
                  {"n_bead", p.n_bead},
                  {"seed", p.seed},
                  {"supersample", p.supersample}};
  j["optics"] = {{"wavelength", p.wavelength}, {"n0", p.n0}, {"r_m", c.r_m}, {"band", c.band}};
  j["motion"] = {{"frames", c.frames}, {"axis", vec3(c.axis)}, {"turns", c.turns}, {"drift", vec3(c.drift)}};
  j["forward"] = name(c.forward);
  j["noise"] = {{"snr_db", c.snr_db ? ojson(*c.snr_db) : ojson(nullptr)},
                {"phase_drift", c.phase_drift},
                {"seed", c.noise_seed}};
  j["preprocess"] = {{"incident", name(c.incident)},
                     {"linearization", name(c.preprocess.linearization)},
                     {"filter", c.filter},
                     {"r1", c.preprocess.r1},
                     {"r2", c.preprocess.r2},
                     {"smooth_sigma", c.preprocess.smooth_sigma},
                     {"recenter", c.preprocess.recenter},
                     {"shift_threshold", c.preprocess.shift.threshold}};
  const auto& inf = c.infinitesimal;
  const auto& d = c.direct;
  j["estimate"] = {{"method", name(c.method)},
                   {"infinitesimal",
                    {{"radii", inf.radii},
                     {"radius_fraction", inf.radius_fraction},
                     {"half_angles", inf.half_angles},
                     {"phi_derivative", name(inf.phi_derivative)},
                     {"regularize", inf.regularize},
                     {"lambda", inf.regularization.lambda},
                     {"alpha", inf.regularization.alpha},
                     {"iterations", inf.regularization.iterations},
                     {"max_halvings", inf.regularization.max_halvings}}},
                   {"direct",
                    {{"lambda", d.lambda},
                     {"quad_points", d.quad_points},
                     {"mean_filter_window", d.mean_filter_window},
                     {"oversample", c.oversample},
                     {"passes", c.passes},
                     {"period", c.period},
                     {"initial_step_deg", d.optimizer.initial_step * 180.0 / kPi},
                     {"tolerance", d.optimizer.tolerance},
                     {"max_evaluations", d.optimizer.max_evaluations}}}};
  j["reconstruct"] = {{"trajectory", name(c.recon_with)},
                      {"iterations", c.cg.iterations},
                      {"tolerance", c.cg.tolerance},
                      {"weights", name(c.weights)}};
  return j;
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  Section root(j, "");
  {
    Section s = root.sub("phantom");
    auto& p = c.phantom;
    s.read("grid", p.grid);
    s.read("pitch", p.pitch);
    s.read_vec3("semi_axes", p.semi_axes);
    s.read("n_ellipsoid", p.n_ellipsoid);
    s.read("bead_count", p.bead_count);
    s.read("bead_radius", p.bead_radius);
    s.read("n_bead", p.n_bead);
    s.read("seed", p.seed);
    s.read("supersample", p.supersample);
    s.finish();
  }
  {
    Section s = root.sub("optics");
    s.read("wavelength", c.phantom.wavelength);
    s.read("n0", c.phantom.n0);
    s.read("r_m", c.r_m);
    s.read("band", c.band);
    s.finish();
  }
  {
    Section s = root.sub("motion");
    s.read("frames", c.frames);
    s.read_vec3("axis", c.axis);
    s.read("turns", c.turns);
    s.read_vec3("drift", c.drift);
    s.finish();
  }
  root.read_enum("forward", c.forward, {{"born", ForwardModel::Born}, {"bpm", ForwardModel::Bpm}});
  {
    Section s = root.sub("noise");
    s.read_optional("snr_db", c.snr_db);
    s.read("phase_drift", c.phase_drift);
    s.read("seed", c.noise_seed);
    s.finish();
  }
  {
    Section s = root.sub("preprocess");
    s.read_enum("incident", c.incident, {{"median", IncidentSource::Median}, {"known", IncidentSource::Known}});
    s.read_enum("linearization", c.preprocess.linearization,
                {{"rytov", Linearization::Rytov}, {"born", Linearization::Born}});
    s.read("filter", c.filter);
    s.read("r1", c.preprocess.r1);
    s.read("r2", c.preprocess.r2);
    s.read("smooth_sigma", c.preprocess.smooth_sigma);
    s.read("recenter", c.preprocess.recenter);
    s.read("shift_threshold", c.preprocess.shift.threshold);
    s.finish();
  }
  {
    Section s = root.sub("estimate");
    s.read_enum("method", c.method,
                {{"infinitesimal", EstimateMethod::Infinitesimal},
                 {"direct", EstimateMethod::Direct},
                 {"both", EstimateMethod::Both}});
    {
      Section t = s.sub("infinitesimal");
      auto& inf = c.infinitesimal;
      t.read("radii", inf.radii);
      t.read("radius_fraction", inf.radius_fraction);
      t.read("half_angles", inf.half_angles);
      t.read_enum("phi_derivative", inf.phi_derivative,
                  {{"sobel", PhiDerivative::Sobel}, {"spectral", PhiDerivative::Spectral}});
      t.read("regularize", inf.regularize);
      t.read("lambda", inf.regularization.lambda);
      t.read("alpha", inf.regularization.alpha);
      t.read("iterations", inf.regularization.iterations);
      t.read("max_halvings", inf.regularization.max_halvings);
      t.finish();
    }
    {
      Section t = s.sub("direct");
      auto& d = c.direct;
      t.read("lambda", d.lambda);
      t.read("quad_points", d.quad_points);
      t.read("mean_filter_window", d.mean_filter_window);
      t.read("oversample", c.oversample);
      t.read("passes", c.passes);
      t.read("period", c.period);
      double step_deg = d.optimizer.initial_step * 180.0 / kPi;
      t.read("initial_step_deg", step_deg);
      d.optimizer.initial_step = step_deg * kPi / 180.0;
      t.read("tolerance", d.optimizer.tolerance);
      t.read("max_evaluations", d.optimizer.max_evaluations);
      t.finish();
    }
    s.finish();
  }
  {
    Section s = root.sub("reconstruct");
    s.read_enum("trajectory", c.recon_with,
                {{"true", ReconTrajectory::True},
                 {"estimated", ReconTrajectory::Estimated},
                 {"both", ReconTrajectory::Both}});
    s.read("iterations", c.cg.iterations);
    s.read("tolerance", c.cg.tolerance);
    s.read_enum("weights", c.weights, {{"kappa", DensityWeights::Kappa}, {"uniform", DensityWeights::Uniform}});
    s.finish();
  }
  root.finish();
  validate(c);
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("config " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

FieldStack simulate_total(const PipelineConfig& c, const Phantom& phantom, const RotationTrajectory& truth) {
  const MeasurementGeometry g = c.geometry();
  if (c.forward == ForwardModel::Bpm) return bpm_stack(phantom.n, truth, g);
  return born_total_stack(n_to_f(phantom), truth, g);
}

FieldStack apply_noise(const PipelineConfig& c, const FieldStack& total) {
  NoiseSpec spec;
  spec.drift_amplitude = c.phase_drift;
  spec.seed = c.noise_seed;
  if (c.snr_db) {
    // SNR relative to the scattered part of the field.
    FieldStack scattered = total;
    const Complex inc = std::exp(Complex(0.0, total.k0() * total.r_m));
    for (auto& f : scattered.frames)
      for (auto& v : f.data()) v -= inc;
    spec.sigma = sigma_for_snr(scattered, *c.snr_db);
  }
  if (spec.sigma == 0.0 && spec.drift_amplitude == 0.0) return total;
  return add_noise(total, spec);
}

PreprocessResult run_preprocess(const PipelineConfig& c, const FieldStack& total) {
  PreprocessResult res;
  if (c.incident == IncidentSource::Median) {
    if (c.filter) return preprocess(total, c.preprocess);
    res.incident = estimate_incident(total);
  } else {
    const double phase = std::remainder(total.k0() * total.r_m, 2.0 * kPi);
    res.incident.phase.assign(total.count(), phase);
    res.incident.amplitude.assign(total.count(), 1.0);
  }
  FieldStack m = c.preprocess.linearization == Linearization::Rytov ? rytov_transform(total, res.incident)
                                                                    : born_subtract(total, res.incident);
  if (c.preprocess.recenter) {
    res.shifts = estimate_shifts(born_subtract(total, res.incident), c.preprocess.shift);
    m = recenter(m, res.shifts.shifts);
  }
  if (c.filter) {
    double r2 = c.preprocess.r2, r1 = c.preprocess.r1;
    if (r2 <= 0.0) r2 = 0.95 * 0.5 * total.size() * total.pitch();
    if (r1 <= 0.0) r1 = 0.7 * r2;
    m = soft_cutoff(m, r1, r2);
    if (c.preprocess.smooth_sigma > 0.0) m = gaussian_smooth_3d(m, c.preprocess.smooth_sigma);
  }
  res.m = std::move(m);
  return res;
}

EstimateResult run_estimate(const PipelineConfig& c, const FieldStack& m, const RotationTrajectory* init) {
  EstimateResult res;
  if (m.count() < 3) throw Error("estimation needs at least three frames");
  if (c.method != EstimateMethod::Direct) {
    spdlog::info("infinitesimal estimation on {} frames", m.count());
    res.infinitesimal = infinitesimal_pipeline(m, Rotation::identity(), c.infinitesimal);
    res.trajectory = res.infinitesimal->trajectory;
  }
  if (c.method == EstimateMethod::Infinitesimal) return res;

  const RotationTrajectory* start = c.method == EstimateMethod::Both ? &res.trajectory : init;
  if (!start) throw Error("direct estimation needs an initial trajectory");
  if (start->size() != m.count()) throw Error("initial trajectory length does not match the stack");
  const RotationTrajectory initial = *start;

  if (c.period > 0.0) {
    res.period = c.period;
  } else {
    res.period = estimate_period(m).period;
    res.period_estimated = true;
  }
  res.schedule = build_schedule(m.count(), res.period, scaled_schedule_options(m.count(), c.passes));
  spdlog::info("direct refinement: period {:.2f}, {} pairs x {} passes", res.period, res.schedule.pairs.size(),
               res.schedule.passes);
  res.direct = direct_pipeline(nu_cartesian_stack(m, c.band, c.oversample), initial, res.schedule, c.direct);
  res.trajectory = res.direct->trajectory;
  return res;
}

ReconResult run_reconstruct(const PipelineConfig& c, const FieldStack& m, const RotationTrajectory& traj) {
  if (traj.size() != m.count()) throw Error("trajectory length does not match the stack");
  ReconResult res;
  const SampleSet samples = assemble_samples(m, traj, c.band, c.weights);
  res.skipped = samples.skipped;
  spdlog::info("reconstruction from {} samples ({} skipped)", samples.nodes.size(), samples.skipped);
  res.cg = cg_inverse_ndft(samples, m.size(), m.pitch(), c.cg);
  res.n = f_to_n(res.cg.f, m.n0, m.k0(), &res.clamped);
  return res;
}

ojson rotation_metrics(const RotationTrajectory& est, const RotationTrajectory& truth) {
  const RotationErrors raw = rotation_error_series(est, truth, false);
  const RotationErrors aligned = rotation_error_series(est, truth, true);
  double max = 0.0;
  for (double e : raw.per_frame_deg) max = std::max(max, e);
  ojson j;
  j["mean_error_deg"] = raw.mean_deg;
  j["max_error_deg"] = max;
  j["aligned_mean_error_deg"] = aligned.mean_deg;
  j["per_frame_error_deg"] = raw.per_frame_deg;
  return j;
}

ojson volume_metrics(const ComplexVolume& f, const ComplexVolume& truth) {
  const RealVolume est = real_part(f), ref = real_part(truth);
  RealVolume mask(ref.size(), ref.pitch());
  for (std::size_t i = 0; i < ref.count(); ++i) mask[i] = ref[i] != 0.0 ? 1.0 : 0.0;
  ojson j;
  j["masked_relative_l2"] = masked_relative_l2(est, ref, mask);
  j["ssim"] = ssim(ref, est);
  j["psnr_db"] = psnr(ref, est);
  return j;
}

ojson version_info() {
  ojson j;
  j["ccodt"] = kVersion;
  j["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  j["fftw"] = std::string(fftw_version);
  j["openssl"] = OpenSSL_version(OPENSSL_VERSION);
  j["libpng"] = PNG_LIBPNG_VER_STRING;
  j["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  j["spdlog"] = std::to_string(SPDLOG_VER_MAJOR) + "." + std::to_string(SPDLOG_VER_MINOR) + "." +
                std::to_string(SPDLOG_VER_PATCH);
  return j;
}

ojson run_pipeline(const PipelineConfig& c, const std::string& out_dir, const std::string& config_path) {
  validate(c);
  std::filesystem::create_directories(out_dir);
  ojson outputs = ojson::object();
  auto record = [&](const std::string& file) { outputs[file] = sha256_file(join(out_dir, file)); };

  spdlog::info("phantom {}^3 at pitch {}", c.phantom.grid, c.phantom.pitch);
  const Phantom phantom = make_phantom(c.phantom);
  const ComplexVolume f_true = n_to_f(phantom);
  const VolumeMeta meta{phantom.wavelength, phantom.n0};
  write_volume(join(out_dir, "phantom_n.odts"), as_complex(phantom.n), meta);
  record("phantom_n.odts");

  const RotationTrajectory truth = c.truth();
  write_trajectory(join(out_dir, "truth.csv"), truth);
  record("truth.csv");

  spdlog::info("simulating {} frames ({})", c.frames, name(c.forward));
  const FieldStack total = apply_noise(c, simulate_total(c, phantom, truth));
  write_stack(join(out_dir, "total.odts"), total);
  record("total.odts");

  const PreprocessResult pre = run_preprocess(c, total);
  write_stack(join(out_dir, "m.odts"), pre.m);
  record("m.odts");

  ojson metrics;
  metrics["schema_version"] = kMetricsSchemaVersion;
  metrics["frames"] = c.frames;

  const bool need_estimate = c.recon_with != ReconTrajectory::True;
  std::optional<EstimateResult> est;
  if (need_estimate) {
    if (c.method == EstimateMethod::Direct)
      throw Error("the pipeline starts direct refinement from the infinitesimal estimate; use method \"both\"");
    est = run_estimate(c, pre.m, nullptr);
    ojson rot;
    if (est->infinitesimal) {
      write_trajectory(join(out_dir, "trajectory_infinitesimal.csv"), est->infinitesimal->trajectory);
      record("trajectory_infinitesimal.csv");
      rot["infinitesimal"] = rotation_metrics(est->infinitesimal->trajectory, truth);
    }
    if (est->direct) {
      write_trajectory(join(out_dir, "trajectory_direct.csv"), est->direct->trajectory);
      record("trajectory_direct.csv");
      rot["direct"] = rotation_metrics(est->direct->trajectory, truth);
      int converged = 0;
      for (const auto& p : est->direct->pairs) converged += p.converged;
      metrics["direct_pairs"] = {{"minimized", est->direct->pairs.size()}, {"converged", converged}};
      metrics["period"] = {{"frames", est->period}, {"estimated", est->period_estimated}};
    }
    write_trajectory(join(out_dir, "trajectory.csv"), est->trajectory);
    record("trajectory.csv");
    metrics["rotation"] = rot;
    metrics["mean_rotation_error_deg"] = rotation_metrics(est->trajectory, truth)["mean_error_deg"];
  }

  ojson recon;
  auto reconstruct = [&](const char* label, const RotationTrajectory& traj) {
    const ReconResult r = run_reconstruct(c, pre.m, traj);
    const std::string fname = std::string("recon_f_") + label + ".odts";
    const std::string nname = std::string("recon_n_") + label + ".odts";
    write_volume(join(out_dir, fname), r.cg.f, meta);
    write_volume(join(out_dir, nname), as_complex(r.n), meta);
    record(fname);
    record(nname);
    ojson v = volume_metrics(r.cg.f, f_true);
    v["clamped_voxels"] = r.clamped;
    v["skipped_nodes"] = r.skipped;
    v["data_residual"] = r.cg.data_residual;
    recon[label] = v;
  };
  if (c.recon_with != ReconTrajectory::Estimated) reconstruct("true", truth);
  if (est) reconstruct("estimated", est->trajectory);
  if (recon.contains("true") && recon.contains("estimated"))
    recon["ssim_degradation"] = recon["true"]["ssim"].get<double>() - recon["estimated"]["ssim"].get<double>();
  metrics["reconstruction"] = recon;

  write_json(join(out_dir, "metrics.json"), metrics);
  record("metrics.json");

  ojson manifest;
  manifest["schema_version"] = kMetricsSchemaVersion;
  manifest["config"] = to_json(c);
  manifest["inputs"] = ojson::object();
  if (!config_path.empty()) manifest["inputs"][config_path] = sha256_file(config_path);
  manifest["outputs"] = outputs;
  manifest["versions"] = version_info();
  write_json(join(out_dir, "manifest.json"), manifest);
  return metrics;
}

}  // namespace ccodt
