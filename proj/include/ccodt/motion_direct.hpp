#pragma once

#include "ccodt/energy.hpp"
#include "ccodt/so3.hpp"

#include <functional>
#include <limits>
#include <vector>

namespace ccodt {

/// Common circle of two frames whose increment has Euler angles (phi, theta, .):
/// (k0/2) sin(theta) (cos(beta) - 1) (cos phi, sin phi)
///   + k0 cos(theta/2) sin(beta) (-sin phi, cos phi).
Vec2 circle_curve(double phi, double theta, double beta, double k0);

/// Dual common circle:
/// -(k0/2) sin(theta) (cos(beta) - 1) (cos phi, sin phi)
///   - k0 sin(theta/2) sin(beta) (-sin phi, cos phi).
Vec2 dual_circle_curve(double phi, double theta, double beta, double k0);

/// Keys cubic convolution (a = -1/2) of nu at an arbitrary frequency; zero
/// outside the grid.
double interpolate_nu(const CartesianEnergyGrid& grid, const Vec2& k);

/// Midpoint quadrature over beta in [-pi/2, pi/2] of the squared mismatch of
/// nu_s and nu_t along the common circle pair and the dual pair.
double pair_energy(const CartesianEnergyGrid& nu_s, const CartesianEnergyGrid& nu_t, const EulerAngles& euler,
                   int quad_points = 200);

/// pair_energy + lambda * distance(prior, Q(euler)).
double regularized_pair_energy(const CartesianEnergyGrid& nu_s, const CartesianEnergyGrid& nu_t,
                               const EulerAngles& euler, const Rotation& prior, double lambda,
                               int quad_points = 200);

struct NelderMeadOptions {
  double initial_step = 5.0 * kPi / 180.0;
  double tolerance = 1e-4;  // simplex diameter
  int max_evaluations = 500;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Downhill simplex with reflection 1, expansion 2, contraction 1/2 and
/// shrink 1/2. The initial simplex adds initial_step along each axis.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x0, const NelderMeadOptions& opts = {});

struct CirclePair {
  int s = 0, t = 0;
  EulerAngles euler;
  double energy = 0.0;
  bool converged = false;
};

/// Minimizes the regularized pair energy over (phi, theta, psi) starting from
/// the Euler angles of the prior increment.
CirclePair minimize_pair(const CartesianEnergyGrid& nu_s, const CartesianEnergyGrid& nu_t, const Rotation& prior,
                         double lambda, int quad_points = 200, const NelderMeadOptions& opts = {});

struct PeriodOptions {
  int min_lag = 2;
  int max_lag = 0;  // 0: T - 2
};

struct PeriodEstimate {
  double period = 0.0;  // sub-frame refined
  std::vector<double> correlation;  // by lag, 0 .. max_lag
};

/// Lag maximizing the mean normalized correlation of |m_t| and |m_{t+lag}|,
/// searched after the first local minimum of the correlation curve.
PeriodEstimate estimate_period(const FieldStack& m, const PeriodOptions& opts = {});

struct ScheduleOptions {
  int passes = 3;
  int stride = 10;
  int offset_min = 20;
  int offset_max = 60;
};

/// Default stride and offsets (10, 20, 60 at 200 frames) rescaled to T frames.
ScheduleOptions scaled_schedule_options(int frames, int passes = 3);

struct PairSchedule {
  std::vector<std::pair<int, int>> pairs;  // one pass
  int passes = 0;
  int min_offset = 0, max_offset = 0;
};

/// Pairs (s, s + offset) for s = 0, stride, 2 stride, ... with offsets in
/// [offset_min, offset_max] clipped to [max(2, period/10), 0.45 period].
/// A non-finite or non-positive period disables the clipping.
PairSchedule build_schedule(int frames, double period, const ScheduleOptions& opts = {});

struct DirectOptions {
  double lambda = 60.0;
  int quad_points = 200;
  int mean_filter_window = 5;
  NelderMeadOptions optimizer;
};

struct DirectResult {
  RotationTrajectory trajectory;
  std::vector<CirclePair> pairs;  // every minimization, in order
};

/// Refines init by minimizing every scheduled pair against the prior
/// increment of the current estimate and chaining R_t := R_s Q(euler).
/// Frames never reached by a converged pair are interpolated geodesically
/// between their nearest anchored neighbors; a mean filter finishes.
DirectResult direct_pipeline(const std::vector<CartesianEnergyGrid>& nu, const RotationTrajectory& init,
                             const PairSchedule& schedule, const DirectOptions& opts = {});

/// nu_cartesian of every frame.
std::vector<CartesianEnergyGrid> nu_cartesian_stack(const FieldStack& m, double band = 0.99, int oversample = 1);

}  // namespace ccodt
