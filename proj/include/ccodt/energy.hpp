#pragma once

#include "ccodt/fourier.hpp"
#include "ccodt/types.hpp"

#include <span>
#include <vector>

namespace ccodt {

/// nu(k) = (2/pi) kappa^2(k) |F2[m](k)|^2 on the centered frequency grid,
/// zero for |k| >= band * k0.
struct CartesianEnergyGrid {
  Grid2<double> nu;  // pitch is the frequency spacing
  double k0 = 0.0;
  double band = 0.99;
};

/// oversample > 1 zero-pads the frame, refining the frequency spacing.
CartesianEnergyGrid nu_cartesian(const FieldImage& m, double k0, double band = 0.99, int oversample = 1);

/// nu_t on a polar grid with radii r_n >= 0 and angles covering the full
/// circle, phi_l = l pi / L for l = 0 .. 2L-1. Values at negative radius
/// are read from the opposite angle: nu(-r, phi) = nu(r, phi + pi).
/// Angular derivatives are d/dphi of nu(r cos phi, r sin phi).
struct PolarEnergyGrid {
  int frames = 0;
  int half_angles = 0;  // L; the stored angle count is 2L
  std::vector<double> radii;
  std::vector<double> angles;  // 2L entries
  double k0 = 0.0;
  std::vector<double> values, dt, dphi;

  int angle_count() const { return 2 * half_angles; }
  int radius_count() const { return static_cast<int>(radii.size()); }
  double radius_step() const { return radii.size() > 1 ? radii[1] - radii[0] : 1.0; }
  double angle_step() const { return kPi / half_angles; }
  bool has_derivatives() const { return !dt.empty() && !dphi.empty(); }

  std::size_t index(int t, int l, int n) const {
    return (static_cast<std::size_t>(t) * angle_count() + l) * radii.size() + n;
  }
  double& operator()(int t, int l, int n) { return values[index(t, l, n)]; }
  double operator()(int t, int l, int n) const { return values[index(t, l, n)]; }
};

/// Uniform radii r_n = n * fraction * k0 / count, n = 0 .. count-1.
std::vector<double> default_radii(int count, double k0, double fraction = 0.95);

/// Energy of every frame on the polar grid with L = half_angles.
PolarEnergyGrid nu_polar(const FieldStack& m, std::span<const double> radii, int half_angles,
                         const NdftOptions& opts = {});

/// Fills dt and dphi with the separable 3D Sobel operator over (t, phi, r):
/// central difference (-1, 0, 1) / 2 on the target axis, (1, 2, 1) / 4 on
/// the other two, divided by the target spacing. phi is periodic over the
/// full circle; the radial neighbor of r = 0 is the opposite ray; t uses
/// one-sided differences at the ends; other borders replicate.
void sobel_derivatives(PolarEnergyGrid& grid, double dt = 1.0);

/// Applies one Sobel derivative to an arbitrary stack laid out like grid
/// values. Axis 0 differentiates in t, axis 1 in phi.
std::vector<double> sobel_apply(const PolarEnergyGrid& grid, const std::vector<double>& data, int axis,
                                double dt = 1.0);

/// Angular derivative of nu from the spectrum of M = -i x m:
/// (4/pi) (k0^2 - r^2) r Re(conj(F2[m]) <F2[M], (-sin phi, cos phi)>).
/// Returned angle-major, matching polar_samples.
std::vector<double> dphi_nu_spectral(const FieldImage& m, std::span<const double> radii,
                                     std::span<const double> angles, double k0,
                                     const NdftOptions& opts = {});

/// Replaces grid.dphi by the spectral angular derivative of each frame.
void spectral_dphi(PolarEnergyGrid& grid, const FieldStack& m, const NdftOptions& opts = {});

}  // namespace ccodt
