#pragma once

#include "ccodt/fourier.hpp"
#include "ccodt/optics.hpp"
#include "ccodt/so3.hpp"

#include <vector>

namespace ccodt {

/// Fourier samples of f at the rotated hemisphere nodes R_t h(k).
struct SampleSet {
  std::vector<Vec3> nodes;
  std::vector<Complex> values;
  std::vector<double> weights;
  std::size_t skipped = 0;  // nodes outside the representable 3D band
};

enum class DensityWeights { Kappa, Uniform };

/// Inverts the diagonal factor of the Born model per frame and grid
/// frequency |k| < band k0:
///   value = F2[m_t](k) kappa e^{-i kappa r_m} e^{i <d_t, h(k)>} / (i sqrt(pi/2)),
/// weight = kappa / k0 (or 1). Translations are used when the trajectory
/// carries them.
SampleSet assemble_samples(const FieldStack& m, const RotationTrajectory& traj, double band = 0.99,
                           DensityWeights weights = DensityWeights::Kappa);

struct CgOptions {
  int iterations = 12;
  double tolerance = 0.0;  // relative normal-residual stop; 0 runs every iteration
  NdftOptions ndft;
};

struct CgResult {
  ComplexVolume f;
  /// ||W^{1/2} (b - A f_j)|| for j = 0 .. iterations; non-increasing.
  std::vector<double> data_residual;
  /// ||A* W (b - A f_j)||.
  std::vector<double> normal_residual;
};

/// Conjugate gradients on A* W A f = A* W b from f = 0, A = ndft3 at the
/// sample nodes on an N^3 grid of the given pitch.
CgResult cg_inverse_ndft(const SampleSet& samples, int grid_n, double pitch, const CgOptions& opts = {});

struct RotationErrors {
  std::vector<double> per_frame_deg;
  double mean_deg = 0.0;
  Rotation alignment;  // applied as Q R_est
};

/// Angles of R_t^T Q R_est_t in degrees; with align, Q minimizes their
/// squared sum (quaternion lattice search refined by Nelder-Mead).
RotationErrors rotation_error_series(const RotationTrajectory& est, const RotationTrajectory& truth,
                                     bool align);

/// 10 log10(range^2 / MSE), capped at 99 dB. range <= 0 selects max - min of a.
double psnr(const RealVolume& a, const RealVolume& b, double range = 0.0);
/// Mean SSIM with a Gaussian window (sigma 1.5 voxels, radius 5, replicated
/// borders) and K1 = 0.01, K2 = 0.03.
double ssim(const RealVolume& a, const RealVolume& b, double range = 0.0);

struct VolumeAlignment {
  Rotation rotation;
  Vec3 shift = Vec3::Zero();
  double coarse_objective = 0.0;
  double objective = 0.0;
};

/// Minimizes sum_x |a(x) - b(R x - c)|^2 with b resampled trilinearly (zero
/// outside). Coarse stage on 2x downsampled volumes over icosahedral
/// directions times in-plane angles with FFT-correlated integer shifts;
/// Nelder-Mead refines the six parameters.
VolumeAlignment global_align_volumes(const RealVolume& a, const RealVolume& b);

/// b(R x - c) on the grid of b.
RealVolume resample_rigid(const RealVolume& b, const Rotation& r, const Vec3& c);

/// Real part of f.
RealVolume real_part(const ComplexVolume& f);

/// Relative L2 error of est against ref over voxels where mask is nonzero.
double masked_relative_l2(const RealVolume& est, const RealVolume& ref, const RealVolume& mask);

}  // namespace ccodt
