#pragma once

#include "ccodt/motion_direct.hpp"
#include "ccodt/motion_infinitesimal.hpp"
#include "ccodt/preprocess.hpp"
#include "ccodt/recon.hpp"
#include "ccodt/simulate.hpp"

#include <json.hpp>

#include <optional>
#include <string>

namespace ccodt {

inline constexpr int kMetricsSchemaVersion = 1;
inline constexpr const char* kVersion = "1.0.0";

enum class ForwardModel { Born, Bpm };
enum class IncidentSource { Median, Known };
enum class EstimateMethod { Infinitesimal, Direct, Both };
enum class ReconTrajectory { True, Estimated, Both };

/// Every stage parameter. Defaults are the full-scale settings; the README
/// lists them next to the desk-scale configuration.
struct PipelineConfig {
  PhantomSpec phantom;
  double r_m = 0.0;
  double band = 0.99;

  // Ground-truth motion: `turns` full turns about `axis` over `frames`.
  int frames = 100;
  Vec3 axis = Vec3::UnitY();
  double turns = 1.0;
  Vec3 drift = Vec3::Zero();  // per frame

  ForwardModel forward = ForwardModel::Born;

  std::optional<double> snr_db;  // absent: no noise
  double phase_drift = 0.0;
  std::uint64_t noise_seed = 7;

  IncidentSource incident = IncidentSource::Median;
  /// false skips cutoff and smoothing.
  bool filter = true;
  PreprocessOptions preprocess;

  EstimateMethod method = EstimateMethod::Both;
  InfinitesimalConfig infinitesimal;
  DirectOptions direct;
  int oversample = 1;
  int passes = 3;
  /// Positive: use as the period; otherwise estimate it from |m|.
  double period = 0.0;

  ReconTrajectory recon_with = ReconTrajectory::Both;
  CgOptions cg;
  DensityWeights weights = DensityWeights::Kappa;

  MeasurementGeometry geometry() const;
  RotationTrajectory truth() const;
};

nlohmann::ordered_json to_json(const PipelineConfig& c);
/// Missing keys keep their defaults; unknown keys and invalid values throw.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::string& path);

/// Stages.
FieldStack simulate_total(const PipelineConfig& c, const Phantom& phantom, const RotationTrajectory& truth);
FieldStack apply_noise(const PipelineConfig& c, const FieldStack& total);
/// Known incident: u_inc = exp(i k0 r_m) per frame instead of the median.
PreprocessResult run_preprocess(const PipelineConfig& c, const FieldStack& total);

struct EstimateResult {
  std::optional<InfinitesimalResult> infinitesimal;
  std::optional<DirectResult> direct;
  double period = 0.0;
  bool period_estimated = false;
  PairSchedule schedule;
  RotationTrajectory trajectory;  // final estimate
};

/// Direct alone needs an initial trajectory.
EstimateResult run_estimate(const PipelineConfig& c, const FieldStack& m,
                            const RotationTrajectory* init = nullptr);

struct ReconResult {
  CgResult cg;
  RealVolume n;
  std::size_t clamped = 0;
  std::size_t skipped = 0;
};
ReconResult run_reconstruct(const PipelineConfig& c, const FieldStack& m, const RotationTrajectory& traj);

nlohmann::ordered_json rotation_metrics(const RotationTrajectory& est, const RotationTrajectory& truth);
/// real(f) against the phantom's f over its support.
nlohmann::ordered_json volume_metrics(const ComplexVolume& f, const ComplexVolume& truth);

/// Runs every stage, writing stacks, trajectories, volumes, metrics.json
/// and manifest.json into out_dir. Returns the metrics.
nlohmann::ordered_json run_pipeline(const PipelineConfig& c, const std::string& out_dir,
                                    const std::string& config_path = "");

/// Library versions recorded in manifests.
nlohmann::ordered_json version_info();

}  // namespace ccodt
