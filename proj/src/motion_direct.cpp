#include "ccodt/motion_direct.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ccodt {

Vec2 circle_curve(double phi, double theta, double beta, double k0) {
  const double a = 0.5 * k0 * std::sin(theta) * (std::cos(beta) - 1.0);
  const double b = k0 * std::cos(0.5 * theta) * std::sin(beta);
  return a * Vec2(std::cos(phi), std::sin(phi)) + b * Vec2(-std::sin(phi), std::cos(phi));
}

Vec2 dual_circle_curve(double phi, double theta, double beta, double k0) {
  const double a = -0.5 * k0 * std::sin(theta) * (std::cos(beta) - 1.0);
  const double b = -k0 * std::sin(0.5 * theta) * std::sin(beta);
  return a * Vec2(std::cos(phi), std::sin(phi)) + b * Vec2(-std::sin(phi), std::cos(phi));
}

namespace {

double keys(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

}  // namespace

double interpolate_nu(const CartesianEnergyGrid& grid, const Vec2& k) {
  const auto& nu = grid.nu;
  const int n = nu.size();
  const double ux = k(0) / nu.pitch() + n / 2, uy = k(1) / nu.pitch() + n / 2;
  const double fx = std::floor(ux), fy = std::floor(uy);
  const int ix = static_cast<int>(fx), iy = static_cast<int>(fy);
  double wx[4], wy[4];
  for (int j = 0; j < 4; ++j) {
    wx[j] = keys(ux - (fx + j - 1));
    wy[j] = keys(uy - (fy + j - 1));
  }
  double acc = 0.0;
  for (int b = 0; b < 4; ++b) {
    const int y = iy + b - 1;
    if (y < 0 || y >= n) continue;
    for (int a = 0; a < 4; ++a) {
      const int x = ix + a - 1;
      if (x < 0 || x >= n) continue;
      acc += wy[b] * wx[a] * nu(y, x);
    }
  }
  return acc;
}

double pair_energy(const CartesianEnergyGrid& nu_s, const CartesianEnergyGrid& nu_t, const EulerAngles& euler,
                   int quad_points) {
  if (quad_points < 1) throw Error("need at least one quadrature point");
  if (nu_s.nu.size() != nu_t.nu.size() || nu_s.nu.pitch() != nu_t.nu.pitch() || nu_s.k0 != nu_t.k0)
    throw Error("energy grids differ in geometry");
  const double k0 = nu_s.k0;
  const EulerAngles e = wrap_euler(euler);
  const double h = kPi / quad_points;
  double sum = 0.0;
  for (int j = 0; j < quad_points; ++j) {
    const double beta = -0.5 * kPi + (j + 0.5) * h;
    const double d1 = interpolate_nu(nu_t, circle_curve(kPi - e.psi, e.theta, -beta, k0)) -
                      interpolate_nu(nu_s, circle_curve(e.phi, e.theta, beta, k0));
    const double d2 = interpolate_nu(nu_t, dual_circle_curve(kPi - e.psi, e.theta, beta, k0)) -
                      interpolate_nu(nu_s, dual_circle_curve(e.phi, e.theta, beta, k0));
    sum += d1 * d1 + d2 * d2;
  }
  return sum * h;
}

double regularized_pair_energy(const CartesianEnergyGrid& nu_s, const CartesianEnergyGrid& nu_t,
                               const EulerAngles& euler, const Rotation& prior, double lambda, int quad_points) {
  if (lambda < 0.0) throw Error("lambda must be non-negative");
  double e = pair_energy(nu_s, nu_t, euler, quad_points);
  if (lambda > 0.0) e += lambda * distance(prior, euler_to_rotation(wrap_euler(euler)));
  return e;
}

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                             const NelderMeadOptions& opts) {
  const std::size_t dim = x0.size();
  if (dim == 0) throw Error("empty starting point");
  NelderMeadResult out;
  std::vector<std::vector<double>> simplex(dim + 1, x0);
  for (std::size_t i = 0; i < dim; ++i) simplex[i + 1][i] += opts.initial_step;
  std::vector<double> values(dim + 1);
  auto eval = [&](const std::vector<double>& x) {
    ++out.evaluations;
    return f(x);
  };
  for (std::size_t i = 0; i <= dim; ++i) values[i] = eval(simplex[i]);

  std::vector<std::size_t> order(dim + 1);
  auto diameter = [&] {
    double d = 0.0;
    for (std::size_t i = 1; i <= dim; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim; ++j) s += std::pow(simplex[order[i]][j] - simplex[order[0]][j], 2);
      d = std::max(d, std::sqrt(s));
    }
    return d;
  };
  auto combine = [&](const std::vector<double>& c, const std::vector<double>& w, double coeff) {
    std::vector<double> x(dim);
    for (std::size_t j = 0; j < dim; ++j) x[j] = c[j] + coeff * (w[j] - c[j]);
    return x;
  };

  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    if (diameter() < opts.tolerance) {
      out.converged = true;
      break;
    }
    if (out.evaluations >= opts.max_evaluations) break;

    const std::size_t worst = order[dim], second = order[dim - 1], best = order[0];
    std::vector<double> centroid(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) centroid[j] += simplex[order[i]][j] / dim;

    const auto reflected = combine(centroid, simplex[worst], -1.0);
    const double fr = eval(reflected);
    if (fr < values[best]) {
      const auto expanded = combine(centroid, simplex[worst], -2.0);
      const double fe = eval(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        values[worst] = fe;
      } else {
        simplex[worst] = reflected;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[second]) {
      simplex[worst] = reflected;
      values[worst] = fr;
      continue;
    }
    // contraction: outside if the reflection improved on the worst vertex
    const bool outside = fr < values[worst];
    const auto contracted = combine(centroid, outside ? reflected : simplex[worst], 0.5);
    const double fc = eval(contracted);
    if (fc < (outside ? fr : values[worst])) {
      simplex[worst] = contracted;
      values[worst] = fc;
      continue;
    }
    for (std::size_t i = 1; i <= dim; ++i) {
      const std::size_t v = order[i];
      simplex[v] = combine(simplex[best], simplex[v], 0.5);
      values[v] = eval(simplex[v]);
    }
  }
  out.x = simplex[order[0]];
  out.value = values[order[0]];
  return out;
}

CirclePair minimize_pair(const CartesianEnergyGrid& nu_s, const CartesianEnergyGrid& nu_t, const Rotation& prior,
                         double lambda, int quad_points, const NelderMeadOptions& opts) {
  const EulerAngles init = rotation_to_euler(prior);
  auto objective = [&](const std::vector<double>& x) {
    return regularized_pair_energy(nu_s, nu_t, {x[0], x[1], x[2]}, prior, lambda, quad_points);
  };
  const NelderMeadResult r = nelder_mead(objective, {init.phi, init.theta, init.psi}, opts);
  CirclePair pair;
  pair.euler = wrap_euler({r.x[0], r.x[1], r.x[2]});
  pair.energy = r.value;
  pair.converged = r.converged;
  return pair;
}

PeriodEstimate estimate_period(const FieldStack& m, const PeriodOptions& opts) {
  const int frames = m.count();
  const int max_lag = opts.max_lag > 0 ? opts.max_lag : frames - 2;
  if (opts.min_lag < 1 || max_lag <= opts.min_lag + 1 || max_lag >= frames)
    throw Error("invalid lag range for period estimation");

  // zero-mean, unit-norm magnitude images
  std::vector<std::vector<double>> a(frames);
  std::vector<bool> flat(frames, false);
  for (int t = 0; t < frames; ++t) {
    const auto& f = m.frames[t];
    a[t].resize(f.count());
    double mean = 0.0;
    for (std::size_t i = 0; i < f.count(); ++i) mean += a[t][i] = std::abs(f[i]);
    mean /= f.count();
    double norm = 0.0;
    for (auto& v : a[t]) {
      v -= mean;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (!(norm > 1e-12 * std::abs(mean) * std::sqrt(double(f.count()))))
      flat[t] = true;
    else
      for (auto& v : a[t]) v /= norm;
  }

  PeriodEstimate out;
  out.correlation.assign(max_lag + 1, 0.0);
  for (int lag = 0; lag <= max_lag; ++lag) {
    double sum = 0.0;
    int count = 0;
    for (int t = 0; t + lag < frames; ++t) {
      if (flat[t] || flat[t + lag]) continue;
      sum += std::inner_product(a[t].begin(), a[t].end(), a[t + lag].begin(), 0.0);
      ++count;
    }
    out.correlation[lag] = count > 0 ? sum / count : 0.0;
  }

  const auto& c = out.correlation;
  constexpr double eps = 1e-9;  // rounding level of a unit correlation
  int start = -1;
  for (int lag = std::max(opts.min_lag, 1); lag < max_lag; ++lag)
    if (c[lag] < c[lag - 1] - eps && c[lag] <= c[lag + 1]) {
      start = lag;
      break;
    }
  if (start < 0) throw Error("no periodicity detected");
  int best = -1;
  for (int lag = start + 1; lag < max_lag; ++lag)
    if (c[lag] > c[lag - 1] + eps && c[lag] >= c[lag + 1] && (best < 0 || c[lag] > c[best] + 1e-12)) best = lag;
  if (best < 0) throw Error("no periodicity detected");
  const double denom = c[best - 1] - 2.0 * c[best] + c[best + 1];
  const double shift = denom < 0.0 ? 0.5 * (c[best - 1] - c[best + 1]) / denom : 0.0;
  out.period = best + std::clamp(shift, -0.5, 0.5);
  return out;
}

ScheduleOptions scaled_schedule_options(int frames, int passes) {
  if (frames < 3) throw Error("need at least three frames");
  ScheduleOptions o;
  o.passes = passes;
  const double scale = frames / 200.0;
  o.stride = std::max(1, static_cast<int>(std::lround(10 * scale)));
  o.offset_min = std::max(2, static_cast<int>(std::lround(20 * scale)));
  o.offset_max = std::max(o.offset_min, static_cast<int>(std::lround(60 * scale)));
  return o;
}

PairSchedule build_schedule(int frames, double period, const ScheduleOptions& opts) {
  if (opts.stride < 1 || opts.passes < 1 || opts.offset_min < 1 || opts.offset_max < opts.offset_min)
    throw Error("invalid schedule options");
  int lo = opts.offset_min, hi = opts.offset_max;
  if (std::isfinite(period) && period > 0.0) {
    lo = std::max(lo, std::max(2, static_cast<int>(std::ceil(period / 10.0))));
    hi = std::min(hi, static_cast<int>(std::floor(0.45 * period)));
  }
  PairSchedule out;
  out.passes = opts.passes;
  out.min_offset = lo;
  out.max_offset = hi;
  for (int s = 0; s < frames; s += opts.stride)
    for (int d = lo; d <= hi && s + d < frames; ++d) out.pairs.emplace_back(s, s + d);
  if (out.pairs.empty()) throw Error("empty pair schedule");
  return out;
}

DirectResult direct_pipeline(const std::vector<CartesianEnergyGrid>& nu, const RotationTrajectory& init,
                             const PairSchedule& schedule, const DirectOptions& opts) {
  const int frames = init.size();
  if (static_cast<int>(nu.size()) != frames) throw Error("one energy grid per frame required");
  for (const auto& [s, t] : schedule.pairs)
    if (s < 0 || t < 0 || s >= frames || t >= frames || s == t) throw Error("schedule does not fit the trajectory");

  DirectResult out;
  RotationTrajectory traj = init;
  for (int pass = 0; pass < schedule.passes; ++pass) {
    std::vector<bool> anchored(frames, false);
    anchored[0] = true;
    for (const auto& [s, t] : schedule.pairs) {
      const Rotation prior = traj.frames[s].transpose() * traj.frames[t];
      CirclePair pair = minimize_pair(nu[s], nu[t], prior, opts.lambda, opts.quad_points, opts.optimizer);
      pair.s = s;
      pair.t = t;
      if (pair.converged) {
        traj.frames[t] = polar_project((traj.frames[s] * euler_to_rotation(pair.euler)).matrix());
        anchored[t] = true;
      }
      out.pairs.push_back(pair);
    }
    // geodesic fill between anchored frames
    int prev = 0;
    for (int t = 1; t < frames; ++t) {
      if (!anchored[t]) continue;
      for (int u = prev + 1; u < t; ++u)
        traj.frames[u] = slerp(traj.frames[prev], traj.frames[t], double(u - prev) / (t - prev));
      prev = t;
    }
  }
  out.trajectory = opts.mean_filter_window > 1 ? mean_filter(traj, opts.mean_filter_window) : traj;
  return out;
}

std::vector<CartesianEnergyGrid> nu_cartesian_stack(const FieldStack& m, double band, int oversample) {
  std::vector<CartesianEnergyGrid> out;
  out.reserve(m.count());
  for (const auto& f : m.frames) out.push_back(nu_cartesian(f, m.k0(), band, oversample));
  return out;
}

}  // namespace ccodt
