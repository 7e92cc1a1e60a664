#include "ccodt/motion_infinitesimal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ccodt {

namespace {

void require_derivatives(const PolarEnergyGrid& grid) {
  if (!grid.has_derivatives()) throw Error("energy grid has no derivatives");
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Signed-radius node k of 2N-1: angle offset (0 or L) and radius index.
struct SignedNode {
  int shift;
  int n;
  double r;
};

std::vector<SignedNode> signed_nodes(const PolarEnergyGrid& grid) {
  const int nr = grid.radius_count();
  std::vector<SignedNode> nodes;
  for (int n = nr - 1; n >= 1; --n) nodes.push_back({grid.half_angles, n, -grid.radii[n]});
  for (int n = 0; n < nr; ++n) nodes.push_back({0, n, grid.radii[n]});
  return nodes;
}

// Represents omega with rho >= 0 and phi on the real line.
CylindricalVelocity full_circle(CylindricalVelocity c) {
  if (c.rho < 0.0) {
    c.rho = -c.rho;
    c.phi += kPi;
  }
  return c;
}

CylindricalVelocity half_circle(CylindricalVelocity c) {
  c = full_circle(c);
  c.phi = std::fmod(c.phi, 2.0 * kPi);
  if (c.phi < 0.0) c.phi += 2.0 * kPi;
  if (c.phi >= kPi) {
    c.phi -= kPi;
    c.rho = -c.rho;
  }
  if (c.phi >= kPi) c.phi = 0.0;
  return c;
}

}  // namespace

double lift_factor(double r, double k0) {
  if (r == 0.0) return 0.0;
  // k0 - sqrt(k0^2 - r^2) = r^2 / (k0 + sqrt(k0^2 - r^2)), stable near 0
  return r / (k0 + std::sqrt(k0 * k0 - r * r));
}

GPQProfile gpq_profile(const PolarEnergyGrid& grid, int t, int l) {
  require_derivatives(grid);
  if (t < 0 || t >= grid.frames) throw Error("frame index out of range");
  const int angles = grid.angle_count();
  GPQProfile out;
  out.dr = grid.radius_step();
  for (const auto& node : signed_nodes(grid)) {
    const std::size_t i = grid.index(t, (l + node.shift) % angles, node.n);
    out.r.push_back(node.r);
    out.g.push_back(grid.dt[i]);
    out.q.push_back(grid.dphi[i]);
    out.p.push_back(lift_factor(node.r, grid.k0) * grid.dphi[i]);
  }
  return out;
}

double profile_residual(const GPQProfile& profile, double rho, double zeta) {
  double j = 0.0;
  for (std::size_t k = 0; k < profile.r.size(); ++k) {
    const double res = profile.g[k] - rho * profile.p[k] - zeta * profile.q[k];
    j += res * res;
  }
  return j * profile.dr;
}

RhoZetaFit solve_rho_zeta(const GPQProfile& profile, double cond_limit) {
  double pp = 0, pq = 0, qq = 0, gp = 0, gq = 0;
  for (std::size_t k = 0; k < profile.r.size(); ++k) {
    pp += profile.p[k] * profile.p[k];
    pq += profile.p[k] * profile.q[k];
    qq += profile.q[k] * profile.q[k];
    gp += profile.g[k] * profile.p[k];
    gq += profile.g[k] * profile.q[k];
  }
  // eigenvalues of the symmetric Gram matrix
  const double mean = 0.5 * (pp + qq);
  const double spread = std::hypot(0.5 * (pp - qq), pq);
  const double lo = mean - spread, hi = mean + spread;
  if (!(hi > 0.0) || !(lo > 0.0) || hi > cond_limit * lo) throw Error("degenerate profile");
  const double det = pp * qq - pq * pq;
  RhoZetaFit fit;
  fit.rho = (qq * gp - pq * gq) / det;
  fit.zeta = (pp * gq - pq * gp) / det;
  fit.residual = profile_residual(profile, fit.rho, fit.zeta);
  return fit;
}

FrameEstimate estimate_omega_frame(const PolarEnergyGrid& grid, int t, double cond_limit) {
  require_derivatives(grid);
  FrameEstimate out;
  out.j.assign(grid.half_angles, std::numeric_limits<double>::infinity());
  double best = std::numeric_limits<double>::infinity();
  for (int l = 0; l < grid.half_angles; ++l) {
    RhoZetaFit fit;
    try {
      fit = solve_rho_zeta(gpq_profile(grid, t, l), cond_limit);
    } catch (const Error&) {
      continue;
    }
    out.j[l] = fit.residual;
    if (fit.residual < best) {
      best = fit.residual;
      out.angle_index = l;
      out.omega = {fit.rho, grid.angles[l], fit.zeta};
    }
  }
  if (out.angle_index < 0) throw Error("all angles degenerate in frame " + std::to_string(t));
  return out;
}

InfinitesimalObjective::InfinitesimalObjective(const PolarEnergyGrid& grid) : grid_(grid) {
  require_derivatives(grid);
  dtphi_ = sobel_apply(grid, grid.dt, 1);
  dphiphi_ = sobel_apply(grid, grid.dphi, 1);
}

FrameObjective InfinitesimalObjective::frame(int t, double rho, double phi, double zeta) const {
  const PolarEnergyGrid& g = grid_;
  const int angles = g.angle_count();
  const double u = phi / g.angle_step();
  const double fl = std::floor(u);
  const double a = u - fl;
  const int l0 = static_cast<int>(((static_cast<long long>(fl) % angles) + angles) % angles);
  const int l1 = (l0 + 1) % angles;
  const double dr = g.radius_step();

  FrameObjective out;
  for (const auto& node : signed_nodes(g)) {
    const std::size_t i0 = g.index(t, (l0 + node.shift) % angles, node.n);
    const std::size_t i1 = g.index(t, (l1 + node.shift) % angles, node.n);
    auto lerp = [&](const std::vector<double>& v) { return (1.0 - a) * v[i0] + a * v[i1]; };
    const double gv = lerp(g.dt), qv = lerp(g.dphi);
    const double c = lift_factor(node.r, g.k0);
    const double res = gv - (rho * c + zeta) * qv;
    out.value += dr * res * res;
    out.d_rho -= 2.0 * dr * c * qv * res;
    out.d_zeta -= 2.0 * dr * qv * res;
    out.d_phi += 2.0 * dr * res * (lerp(dtphi_) - (rho * c + zeta) * lerp(dphiphi_));
  }
  return out;
}

namespace {

// Centered first difference with replicated ends.
double first_diff(const std::vector<double>& v, int t) {
  const int n = static_cast<int>(v.size());
  return 0.5 * (v[std::min(t + 1, n - 1)] - v[std::max(t - 1, 0)]);
}

double second_diff(const std::vector<double>& v, int t) {
  const int n = static_cast<int>(v.size());
  return v[std::min(t + 1, n - 1)] - 2.0 * v[t] + v[std::max(t - 1, 0)];
}

struct Columns {
  std::vector<double> rho, phi, zeta;
};

Columns columns(const CylindricalSeries& s) {
  Columns c;
  for (const auto& v : s) {
    c.rho.push_back(v.rho);
    c.phi.push_back(v.phi);
    c.zeta.push_back(v.zeta);
  }
  return c;
}

}  // namespace

double InfinitesimalObjective::total(const CylindricalSeries& s, double lambda) const {
  if (static_cast<int>(s.size()) != grid_.frames) throw Error("series length does not match the energy grid");
  const Columns c = columns(s);
  double sum = 0.0;
  for (int t = 0; t < grid_.frames; ++t) {
    sum += frame(t, c.rho[t], c.phi[t], c.zeta[t]).value;
    if (lambda != 0.0) {
      const double dr = first_diff(c.rho, t), dp = first_diff(c.phi, t), dz = first_diff(c.zeta, t);
      sum += lambda * (dr * dr + std::abs(c.rho[t]) * dp * dp + dz * dz);
    }
  }
  return sum;
}

CylindricalSeries regularizer_gradient(const CylindricalSeries& s, double lambda) {
  const Columns c = columns(s);
  CylindricalSeries grad(s.size());
  for (int t = 0; t < static_cast<int>(s.size()); ++t) {
    const double dp = first_diff(c.phi, t);
    grad[t].rho = lambda * (-2.0 * second_diff(c.rho, t) + sign(c.rho[t]) * dp * dp);
    grad[t].phi = -2.0 * lambda * (std::abs(c.rho[t]) * second_diff(c.phi, t) + sign(c.rho[t]) * first_diff(c.rho, t) * dp);
    grad[t].zeta = -2.0 * lambda * second_diff(c.zeta, t);
  }
  return grad;
}

RegularizeResult regularize_series(const CylindricalSeries& series, const PolarEnergyGrid& grid,
                                   const RegularizeOptions& opts) {
  if (static_cast<int>(series.size()) != grid.frames) throw Error("series length does not match the energy grid");
  if (!(opts.alpha > 0.0) || opts.lambda < 0.0 || opts.iterations < 0)
    throw Error("invalid regularization options");
  const InfinitesimalObjective objective(grid);

  // Continuous representative: rho >= 0, phi unwrapped by multiples of 2 pi.
  CylindricalSeries s;
  for (const auto& v : series) {
    CylindricalVelocity c = full_circle(v);
    if (!s.empty()) c.phi += 2.0 * kPi * std::round((s.back().phi - c.phi) / (2.0 * kPi));
    s.push_back(c);
  }

  RegularizeResult out;
  double value = objective.total(s, opts.lambda);
  out.objective.push_back(value);
  double alpha = opts.alpha;
  const int frames = grid.frames;
  for (int it = 0; it < opts.iterations; ++it) {
    CylindricalSeries grad = regularizer_gradient(s, opts.lambda);
    for (int t = 0; t < frames; ++t) {
      const FrameObjective f = objective.frame(t, s[t].rho, s[t].phi, s[t].zeta);
      grad[t].rho += f.d_rho;
      grad[t].phi += f.d_phi;
      grad[t].zeta += f.d_zeta;
    }

    bool accepted = false;
    for (int h = 0; h <= opts.max_halvings; ++h) {
      if (h > 0) alpha *= 0.5;
      CylindricalSeries trial = s;
      for (int t = 0; t < frames; ++t) {
        trial[t].rho -= alpha * grad[t].rho;
        trial[t].phi -= alpha * grad[t].phi;
        trial[t].zeta -= alpha * grad[t].zeta;
        if (!std::isfinite(trial[t].rho) || !std::isfinite(trial[t].phi) || !std::isfinite(trial[t].zeta))
          throw Error("divergent descent; reduce alpha");
      }
      const double v = objective.total(trial, opts.lambda);
      if (!std::isfinite(v)) throw Error("divergent descent; reduce alpha");
      if (v <= value) {
        s = std::move(trial);
        value = v;
        accepted = true;
        break;
      }
    }
    out.objective.push_back(value);
    if (!accepted) break;
  }

  for (const auto& v : s) out.series.push_back(half_circle(v));
  return out;
}

InfinitesimalResult infinitesimal_pipeline(const FieldStack& m, const Rotation& r0,
                                           const InfinitesimalConfig& config) {
  if (m.count() < 3) throw Error("need at least three frames");
  const int count = config.radii > 0 ? config.radii : m.size() / 2;
  const auto radii = default_radii(count, m.k0(), config.radius_fraction);
  PolarEnergyGrid grid = nu_polar(m, radii, config.half_angles, config.ndft);
  sobel_derivatives(grid);
  if (config.phi_derivative == PhiDerivative::Spectral) spectral_dphi(grid, m, config.ndft);

  InfinitesimalResult out;
  for (int t = 0; t < grid.frames; ++t) out.raw.push_back(estimate_omega_frame(grid, t).omega);
  if (config.regularize) {
    RegularizeResult reg = regularize_series(out.raw, grid, config.regularization);
    out.regularized = std::move(reg.series);
    out.objective = std::move(reg.objective);
  } else {
    out.regularized = out.raw;
  }
  for (const auto& c : out.regularized) out.omega.push_back(from_cylindrical(c));
  out.trajectory = integrate_trajectory(out.omega, r0);
  return out;
}

}  // namespace ccodt
