#pragma once

#include "ccodt/fourier.hpp"
#include "ccodt/optics.hpp"
#include "ccodt/so3.hpp"
#include "ccodt/types.hpp"

#include <cstdint>
#include <vector>

namespace ccodt {

/// Ellipsoid with embedded beads of higher index.
struct PhantomSpec {
  int grid = 64;
  double pitch = 0.15;
  double n0 = 1.33;
  double wavelength = 0.64;
  Vec3 semi_axes{3.0, 2.4, 2.1};
  double n_ellipsoid = 1.35;
  int bead_count = 20;
  double bead_radius = 0.4;
  double n_bead = 1.38;
  std::uint64_t seed = 1;
  /// Subsamples per axis when rasterizing; 1 samples voxel centers only.
  int supersample = 1;
};

struct Phantom {
  RealVolume n;
  double n0 = 1.33;
  double wavelength = 0.64;
  std::vector<Vec3> bead_centers;

  double k0() const { return 2.0 * kPi * n0 / wavelength; }
};

Phantom make_phantom(const PhantomSpec& spec);

/// f = k0^2 (n^2 / n0^2 - 1).
ComplexVolume n_to_f(const RealVolume& n, double n0, double k0);
ComplexVolume n_to_f(const Phantom& p);
/// n = n0 sqrt(f / k0^2 + 1) on the real part of f. Throws on negative
/// radicands unless `clamped` is given, in which case they are clamped to 0
/// and counted.
RealVolume f_to_n(const ComplexVolume& f, double n0, double k0, std::size_t* clamped = nullptr);

/// Trilinear resampling of x -> vol(R (x - d)), zero outside the grid.
template <typename T>
Grid3<T> apply_rigid_motion(const Grid3<T>& vol, const Rotation& r, const Vec3& d);

/// Scattered field m_t at the measurement plane under the Born model, for
/// the object f_t(x) = f(R (x - d)). Frequencies outside the band are zero.
FieldImage born_measure(const Ndft3Evaluator& f_hat, const MeasurementGeometry& g,
                        const Rotation& r, const Vec3& d);
FieldImage born_measure(const ComplexVolume& f, const MeasurementGeometry& g, const Rotation& r,
                        const Vec3& d, const NdftOptions& opts = {});

/// Total field at the measurement plane from a split-step march along x3
/// through n(R (x - d)), one slice per voxel. The volume grid must match the
/// detector grid.
FieldImage bpm_measure(const RealVolume& n, const MeasurementGeometry& g, const Rotation& r,
                       const Vec3& d);

/// Constant body-frame angular velocity, R_t = R0 exp(t * step * axis) for a
/// unit axis, with translations t * drift.
RotationTrajectory constant_rotation(int frames, const Vec3& axis, double step,
                                     const Vec3& drift = Vec3::Zero(),
                                     const Rotation& r0 = Rotation::identity());

/// Scattered fields m_t for every frame of the trajectory.
FieldStack born_stack(const ComplexVolume& f, const RotationTrajectory& traj,
                      const MeasurementGeometry& g, const NdftOptions& opts = {});
/// Total fields u_t = e^{i k0 r_m} + m_t.
FieldStack born_total_stack(const ComplexVolume& f, const RotationTrajectory& traj,
                            const MeasurementGeometry& g, const NdftOptions& opts = {});
FieldStack bpm_stack(const RealVolume& n, const RotationTrajectory& traj,
                     const MeasurementGeometry& g);

struct NoiseSpec {
  double sigma = 0.0;            // per real component
  double drift_amplitude = 0.0;  // peak per-frame phase drift in radians
  std::uint64_t seed = 7;
};

/// Adds i.i.d. complex Gaussian noise and multiplies frame t by
/// exp(i a sin(2 pi t / T + c)) with a seeded phase c.
FieldStack add_noise(const FieldStack& stack, const NoiseSpec& spec);
/// Pixelwise sum with a recorded noise clip of the same shape.
FieldStack add_noise(const FieldStack& stack, const FieldStack& noise);

/// Noise level giving 10 log10(|signal|^2 / (count * 2 sigma^2)) = snr_db,
/// i.e. the ratio of mean signal power to mean noise power per pixel.
double sigma_for_snr(const FieldStack& signal, double snr_db);

}  // namespace ccodt
