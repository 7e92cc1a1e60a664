#pragma once

#include "ccodt/energy.hpp"
#include "ccodt/so3.hpp"

#include <vector>

namespace ccodt {

/// g, p, q of one frame and one angle on the signed radius grid
/// -r_{N-1} < ... < -r_1 < 0 < r_1 < ... < r_{N-1}. Negative radii read the
/// opposite ray.
struct GPQProfile {
  std::vector<double> r, g, p, q;
  double dr = 0.0;  // quadrature weight
};

/// (k0 - sqrt(k0^2 - r^2)) / r, odd in r, zero at r = 0.
double lift_factor(double r, double k0);

/// Profile along phi_l, l in [0, 2L). Requires grid derivatives.
GPQProfile gpq_profile(const PolarEnergyGrid& grid, int t, int l);

struct RhoZetaFit {
  double rho = 0.0;
  double zeta = 0.0;
  double residual = 0.0;  // J at (rho, zeta)
};

/// Discretized J = sum dr (g - rho p - zeta q)^2.
double profile_residual(const GPQProfile& profile, double rho, double zeta);

/// Least-squares (rho, zeta) from the 2x2 normal equations. Throws
/// "degenerate profile" when the Gram matrix condition number exceeds
/// cond_limit.
RhoZetaFit solve_rho_zeta(const GPQProfile& profile, double cond_limit = 1e12);

struct FrameEstimate {
  CylindricalVelocity omega;  // phi in [0, pi)
  int angle_index = -1;
  std::vector<double> j;  // per angle on [0, pi); +inf where degenerate
};

/// Angular velocity of frame t in radians per frame (per unit of the dt
/// spacing used for the derivatives).
FrameEstimate estimate_omega_frame(const PolarEnergyGrid& grid, int t, double cond_limit = 1e12);

using CylindricalSeries = std::vector<CylindricalVelocity>;

struct RegularizeOptions {
  double lambda = 0.1;
  double alpha = 1e-10;
  int iterations = 50;
  int max_halvings = 20;
};

/// Data term of frame t at a continuous angle phi (any real value) and its
/// partial derivatives. Profiles are interpolated linearly between angles.
struct FrameObjective {
  double value = 0.0;
  double d_rho = 0.0, d_phi = 0.0, d_zeta = 0.0;
};

/// Evaluates J_t and its gradient. Mixed and second angular derivatives
/// come from the Sobel phi stencil applied to grid.dt and grid.dphi.
class InfinitesimalObjective {
 public:
  explicit InfinitesimalObjective(const PolarEnergyGrid& grid);

  FrameObjective frame(int t, double rho, double phi, double zeta) const;
  /// sum_t J_t + lambda sum_t G_t with centered first differences.
  double total(const CylindricalSeries& s, double lambda) const;

  const PolarEnergyGrid& grid() const { return grid_; }

 private:
  const PolarEnergyGrid& grid_;
  std::vector<double> dtphi_, dphiphi_;
};

/// Gradient of lambda sum_t G_t, G_t = (rho')^2 + |rho| (phi')^2 + (zeta')^2,
/// from the Euler-Lagrange terms with centered second differences.
CylindricalSeries regularizer_gradient(const CylindricalSeries& s, double lambda);

struct RegularizeResult {
  CylindricalSeries series;        // phi in [0, pi)
  std::vector<double> objective;   // before the first step, then after each
};

/// Gradient descent on the regularized functional with a monotone step
/// safeguard. Throws "divergent descent; reduce alpha" on non-finite iterates.
RegularizeResult regularize_series(const CylindricalSeries& series, const PolarEnergyGrid& grid,
                                   const RegularizeOptions& opts = {});

enum class PhiDerivative { Sobel, Spectral };

struct InfinitesimalConfig {
  int radii = 0;  // 0: N/2
  double radius_fraction = 0.95;
  int half_angles = 180;
  PhiDerivative phi_derivative = PhiDerivative::Sobel;
  bool regularize = true;
  RegularizeOptions regularization;
  NdftOptions ndft;
};

struct InfinitesimalResult {
  RotationTrajectory trajectory;
  CylindricalSeries raw;
  CylindricalSeries regularized;
  std::vector<Vec3> omega;
  std::vector<double> objective;
};

InfinitesimalResult infinitesimal_pipeline(const FieldStack& m, const Rotation& r0 = Rotation::identity(),
                                           const InfinitesimalConfig& config = {});

}  // namespace ccodt
