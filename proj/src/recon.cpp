#include "ccodt/recon.hpp"

#include "ccodt/motion_direct.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace ccodt {

SampleSet assemble_samples(const FieldStack& m, const RotationTrajectory& traj, double band, DensityWeights weights) {
  if (traj.size() != m.count()) throw Error("trajectory length must match the stack");
  if (traj.has_translations() && static_cast<int>(traj.translations.size()) != traj.size())
    throw Error("one translation per frame required");
  const MeasurementGeometry g = MeasurementGeometry::of(m, band);
  const double k0 = g.k0(), limit = kPi / g.pitch;
  const auto grid = band_nodes(g);
  const Complex denom = Complex(0.0, std::sqrt(kPi / 2.0));

  SampleSet out;
  out.nodes.reserve(grid.size() * m.count());
  out.values.reserve(grid.size() * m.count());
  out.weights.reserve(grid.size() * m.count());
  for (int t = 0; t < m.count(); ++t) {
    const SpectrumImage spectrum = fft2_centered(m.frames[t]);
    const Vec3 d = traj.has_translations() ? traj.translations[t] : Vec3::Zero();
    for (const auto& node : grid) {
      const Vec3 h = lift(node.k, k0);
      const Vec3 x = traj.frames[t] * h;
      if (x.cwiseAbs().maxCoeff() >= limit) {
        ++out.skipped;
        continue;
      }
      const double kap = kappa(node.k, k0);
      const Complex phase = std::exp(Complex(0.0, -kap * g.r_m + d.dot(h)));
      out.nodes.push_back(x);
      out.values.push_back(spectrum(node.iy, node.ix) * kap * phase / denom);
      out.weights.push_back(weights == DensityWeights::Kappa ? kap / k0 : 1.0);
    }
  }
  return out;
}

namespace {

double weighted_norm(const std::vector<Complex>& r, const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t j = 0; j < r.size(); ++j) s += w[j] * std::norm(r[j]);
  return std::sqrt(s);
}

double norm(const ComplexVolume& v) {
  double s = 0.0;
  for (const auto& x : v.data()) s += std::norm(x);
  return std::sqrt(s);
}

void check_finite(const ComplexVolume& v) {
  for (const auto& x : v.data())
    if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) throw Error("non-finite CG iterate");
}

}  // namespace

CgResult cg_inverse_ndft(const SampleSet& samples, int grid_n, double pitch, const CgOptions& opts) {
  const std::size_t count = samples.nodes.size();
  if (count == 0) throw Error("no samples to invert");
  if (samples.values.size() != count || samples.weights.size() != count)
    throw Error("sample arrays differ in length");
  if (opts.iterations < 0) throw Error("iteration count must be non-negative");

  const auto& w = samples.weights;
  auto forward = [&](const ComplexVolume& v) { return Ndft3Evaluator(v, opts.ndft)(samples.nodes); };
  auto adjoint_weighted = [&](const std::vector<Complex>& r) {
    std::vector<Complex> wr(count);
    for (std::size_t j = 0; j < count; ++j) wr[j] = w[j] * r[j];
    return ndft3_adjoint(wr, samples.nodes, grid_n, pitch, opts.ndft);
  };

  CgResult out;
  out.f = ComplexVolume(grid_n, pitch);
  std::vector<Complex> r = samples.values;  // b - A f with f = 0
  ComplexVolume s = adjoint_weighted(r);
  ComplexVolume p = s;
  double gamma = std::pow(norm(s), 2);
  if (!std::isfinite(gamma)) throw Error("non-finite CG iterate");
  const double s0 = std::sqrt(gamma);
  out.data_residual.push_back(weighted_norm(r, w));
  out.normal_residual.push_back(s0);

  for (int it = 0; it < opts.iterations; ++it) {
    if (gamma == 0.0) break;
    if (opts.tolerance > 0.0 && std::sqrt(gamma) <= opts.tolerance * s0) break;
    const std::vector<Complex> q = forward(p);
    const double qwq = std::pow(weighted_norm(q, w), 2);
    if (!std::isfinite(qwq)) throw Error("non-finite CG iterate");
    if (qwq == 0.0) break;
    const double alpha = gamma / qwq;
    for (std::size_t i = 0; i < out.f.count(); ++i) out.f[i] += alpha * p[i];
    for (std::size_t j = 0; j < count; ++j) r[j] -= alpha * q[j];
    check_finite(out.f);
    s = adjoint_weighted(r);
    const double gamma_next = std::pow(norm(s), 2);
    for (std::size_t i = 0; i < p.count(); ++i) p[i] = s[i] + (gamma_next / gamma) * p[i];
    gamma = gamma_next;
    out.data_residual.push_back(weighted_norm(r, w));
    out.normal_residual.push_back(std::sqrt(gamma));
  }
  return out;
}

namespace {

double rotation_angle(const Mat3& m) { return angle_of(Rotation::unchecked(m)); }

}  // namespace

RotationErrors rotation_error_series(const RotationTrajectory& est, const RotationTrajectory& truth, bool align) {
  if (est.size() != truth.size()) throw Error("trajectories differ in length");
  const int frames = est.size();
  // angle(R_t^T Q R_est) = angle(Q P_t) with P_t = R_est R_t^T
  std::vector<Mat3> prod(frames);
  for (int t = 0; t < frames; ++t) prod[t] = est.frames[t].matrix() * truth.frames[t].matrix().transpose();
  auto cost = [&](const Mat3& q) {
    double c = 0.0;
    for (const auto& p : prod) c += std::pow(rotation_angle(q * p), 2);
    return c;
  };

  RotationErrors out;
  if (align && frames > 0) {
    constexpr int steps = 13;  // 13^4 lattice, about 1.5e4 samples with q0 >= 0
    Mat3 best = Mat3::Identity();
    double best_cost = cost(best);
    for (int a = 0; a < steps; ++a)
      for (int b = 0; b < steps; ++b)
        for (int c = 0; c < steps; ++c)
          for (int d = 0; d < steps; ++d) {
            const double q0 = -1.0 + 2.0 * a / (steps - 1);
            if (q0 < 0.0) continue;
            const Quaternion q{q0, -1.0 + 2.0 * b / (steps - 1), -1.0 + 2.0 * c / (steps - 1),
                               -1.0 + 2.0 * d / (steps - 1)};
            if (q.q0 * q.q0 + q.q1 * q.q1 + q.q2 * q.q2 + q.q3 * q.q3 < 1e-12) continue;
            const Mat3 m = from_quaternion(q).matrix();
            const double v = cost(m);
            if (v < best_cost) {
              best_cost = v;
              best = m;
            }
          }
    const Rotation start = polar_project(best);
    NelderMeadOptions nm;
    nm.initial_step = 2.0 * kPi / 180.0;
    nm.tolerance = 1e-8;
    nm.max_evaluations = 2000;
    const auto r = nelder_mead(
        [&](const std::vector<double>& v) { return cost((exp_map({v[0], v[1], v[2]}) * start).matrix()); },
        {0.0, 0.0, 0.0}, nm);
    const Rotation refined = exp_map({r.x[0], r.x[1], r.x[2]}) * start;
    out.alignment = r.value <= best_cost ? refined : start;
  }
  double sum = 0.0;
  for (int t = 0; t < frames; ++t) {
    const double e = distance(truth.frames[t], out.alignment * est.frames[t]) * 180.0 / kPi;
    out.per_frame_deg.push_back(e);
    sum += e;
  }
  out.mean_deg = frames > 0 ? sum / frames : 0.0;
  return out;
}

namespace {

void check_same_grid(const RealVolume& a, const RealVolume& b) {
  if (a.size() != b.size() || a.count() != b.count()) throw Error("volumes differ in size");
}

double reference_range(const RealVolume& a, double range) {
  if (range > 0.0) return range;
  const auto [lo, hi] = std::minmax_element(a.data().begin(), a.data().end());
  return *hi - *lo;
}

// Separable Gaussian filter along all three axes with replicated borders.
std::vector<double> gaussian_filter(const std::vector<double>& v, int n, double sigma, int radius) {
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int j = -radius; j <= radius; ++j) sum += k[j + radius] = std::exp(-0.5 * j * j / (sigma * sigma));
  for (auto& x : k) x /= sum;
  auto idx = [n](int z, int y, int x) { return (static_cast<std::size_t>(z) * n + y) * n + x; };
  std::vector<double> a = v, b(v.size());
  for (int axis = 0; axis < 3; ++axis) {
    for (int z = 0; z < n; ++z)
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          double acc = 0.0;
          for (int j = -radius; j <= radius; ++j) {
            int c[3] = {z, y, x};
            c[axis] = std::clamp(c[axis] + j, 0, n - 1);
            acc += k[j + radius] * a[idx(c[0], c[1], c[2])];
          }
          b[idx(z, y, x)] = acc;
        }
    std::swap(a, b);
  }
  return a;
}

}  // namespace

double psnr(const RealVolume& a, const RealVolume& b, double range) {
  check_same_grid(a, b);
  double mse = 0.0;
  for (std::size_t i = 0; i < a.count(); ++i) mse += std::pow(a[i] - b[i], 2);
  mse /= static_cast<double>(a.count());
  const double l = reference_range(a, range);
  if (mse == 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(l * l / mse));
}

double ssim(const RealVolume& a, const RealVolume& b, double range) {
  check_same_grid(a, b);
  const int n = a.size();
  const double l = reference_range(a, range);
  const double c1 = std::pow(0.01 * l, 2), c2 = std::pow(0.03 * l, 2);
  constexpr double sigma = 1.5;
  constexpr int radius = 5;
  std::vector<double> aa(a.count()), bb(a.count()), ab(a.count());
  for (std::size_t i = 0; i < a.count(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = gaussian_filter(a.data(), n, sigma, radius);
  const auto mu_b = gaussian_filter(b.data(), n, sigma, radius);
  const auto m_aa = gaussian_filter(aa, n, sigma, radius);
  const auto m_bb = gaussian_filter(bb, n, sigma, radius);
  const auto m_ab = gaussian_filter(ab, n, sigma, radius);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.count(); ++i) {
    const double va = m_aa[i] - mu_a[i] * mu_a[i], vb = m_bb[i] - mu_b[i] * mu_b[i];
    const double cov = m_ab[i] - mu_a[i] * mu_b[i];
    sum += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
           ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  return sum / static_cast<double>(a.count());
}

RealVolume resample_rigid(const RealVolume& b, const Rotation& r, const Vec3& c) {
  const int n = b.size();
  const double p = b.pitch();
  RealVolume out(n, p);
  const Mat3& m = r.matrix();
  auto at = [&](int z, int y, int x) {
    return (z < 0 || y < 0 || x < 0 || z >= n || y >= n || x >= n) ? 0.0 : b(z, y, x);
  };
  for (int iz = 0; iz < n; ++iz)
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        const Vec3 x(b.coord(ix), b.coord(iy), b.coord(iz));
        const Vec3 u = (m * x - c) / p + Vec3::Constant(n / 2);
        const double fx = std::floor(u(0)), fy = std::floor(u(1)), fz = std::floor(u(2));
        const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy), z0 = static_cast<int>(fz);
        if (x0 < -1 || y0 < -1 || z0 < -1 || x0 >= n || y0 >= n || z0 >= n) continue;
        const double ax = u(0) - fx, ay = u(1) - fy, az = u(2) - fz;
        double acc = 0.0;
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const double wgt = (dz ? az : 1 - az) * (dy ? ay : 1 - ay) * (dx ? ax : 1 - ax);
              if (wgt != 0.0) acc += wgt * at(z0 + dz, y0 + dy, x0 + dx);
            }
        out(iz, iy, ix) = acc;
      }
  return out;
}

namespace {

double squared_distance(const RealVolume& a, const RealVolume& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.count(); ++i) s += std::pow(a[i] - b[i], 2);
  return s;
}

RealVolume downsample2(const RealVolume& v) {
  const int n = v.size() / 2;
  RealVolume out(n, 2.0 * v.pitch());
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        double s = 0.0;
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) s += v(2 * z + dz, 2 * y + dy, 2 * x + dx);
        out(z, y, x) = s / 8.0;
      }
  return out;
}

// Icosahedron vertices, face centers and edge midpoints plus the poles.
std::vector<Vec3> orientation_directions() {
  const double g = 0.5 * (1.0 + std::sqrt(5.0));
  std::vector<Vec3> v;
  for (double s1 : {-1.0, 1.0})
    for (double s2 : {-1.0, 1.0}) {
      v.emplace_back(0.0, s1, s2 * g);
      v.emplace_back(s1, s2 * g, 0.0);
      v.emplace_back(s2 * g, 0.0, s1);
    }
  const double edge = 2.0;
  std::vector<Vec3> dirs;
  for (const auto& a : v) dirs.push_back(a.normalized());
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      if (std::abs((v[i] - v[j]).norm() - edge) > 1e-9) continue;
      dirs.push_back((v[i] + v[j]).normalized());
      for (std::size_t k = j + 1; k < v.size(); ++k)
        if (std::abs((v[i] - v[k]).norm() - edge) < 1e-9 && std::abs((v[j] - v[k]).norm() - edge) < 1e-9)
          dirs.push_back((v[i] + v[j] + v[k]).normalized());
    }
  dirs.push_back(Vec3::UnitZ());
  dirs.push_back(-Vec3::UnitZ());
  return dirs;
}

Rotation align_z_to(const Vec3& u) {
  const Vec3 axis = Vec3::UnitZ().cross(u);
  const double s = axis.norm(), c = u.z();
  if (s < 1e-12) return c > 0 ? Rotation::identity() : Rotation::about_x(kPi);
  return Rotation::about_axis(axis / s, std::atan2(s, c));
}

// Circular cross-correlation C(u) = sum_x a(x) b(x - u) through FFTW.
class Correlator {
 public:
  explicit Correlator(int n) : n_(n), size_(static_cast<std::size_t>(n) * n * n) {
    fa_ = fftw_alloc_complex(size_);
    fb_ = fftw_alloc_complex(size_);
    fwd_a_ = fftw_plan_dft_3d(n, n, n, fa_, fa_, FFTW_FORWARD, FFTW_ESTIMATE);
    fwd_b_ = fftw_plan_dft_3d(n, n, n, fb_, fb_, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_3d(n, n, n, fb_, fb_, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~Correlator() {
    fftw_destroy_plan(fwd_a_);
    fftw_destroy_plan(fwd_b_);
    fftw_destroy_plan(bwd_);
    fftw_free(fa_);
    fftw_free(fb_);
  }
  Correlator(const Correlator&) = delete;
  Correlator& operator=(const Correlator&) = delete;

  void set_reference(const RealVolume& a) {
    for (std::size_t i = 0; i < size_; ++i) {
      fa_[i][0] = a[i];
      fa_[i][1] = 0.0;
    }
    fftw_execute(fwd_a_);
  }

  /// Best integer shift u (voxels, |u_i| <= n/4) maximizing C(u).
  std::array<int, 3> best_shift(const RealVolume& b) {
    for (std::size_t i = 0; i < size_; ++i) {
      fb_[i][0] = b[i];
      fb_[i][1] = 0.0;
    }
    fftw_execute(fwd_b_);
    for (std::size_t i = 0; i < size_; ++i) {
      const Complex prod = Complex(fa_[i][0], fa_[i][1]) * std::conj(Complex(fb_[i][0], fb_[i][1]));
      fb_[i][0] = prod.real();
      fb_[i][1] = prod.imag();
    }
    fftw_execute(bwd_);
    const int lim = n_ / 4;
    std::array<int, 3> best{0, 0, 0};
    double best_v = -std::numeric_limits<double>::infinity();
    for (int z = -lim; z <= lim; ++z)
      for (int y = -lim; y <= lim; ++y)
        for (int x = -lim; x <= lim; ++x) {
          const std::size_t i = (static_cast<std::size_t>((z + n_) % n_) * n_ + (y + n_) % n_) * n_ + (x + n_) % n_;
          if (fb_[i][0] > best_v) {
            best_v = fb_[i][0];
            best = {x, y, z};
          }
        }
    return best;
  }

 private:
  int n_;
  std::size_t size_;
  fftw_complex *fa_, *fb_;
  fftw_plan fwd_a_, fwd_b_, bwd_;
};

}  // namespace

VolumeAlignment global_align_volumes(const RealVolume& a, const RealVolume& b) {
  check_same_grid(a, b);
  const bool coarse_ok = a.size() % 4 == 0 && a.size() >= 8;
  const RealVolume ca = coarse_ok ? downsample2(a) : a;
  const RealVolume cb = coarse_ok ? downsample2(b) : b;
  const double cp = ca.pitch();

  Correlator corr(ca.size());
  corr.set_reference(ca);
  Rotation best_r;
  Vec3 best_c = Vec3::Zero();
  double best_v = std::numeric_limits<double>::infinity();
  for (const Vec3& u : orientation_directions()) {
    const Rotation base = align_z_to(u);
    for (int k = 0; k < 24; ++k) {
      const Rotation r = base * Rotation::about_z(k * kPi / 12.0);
      const RealVolume br = resample_rigid(cb, r, Vec3::Zero());  // b(R y)
      const auto s = corr.best_shift(br);
      // b(R x - c) = b_R(x - u) with c = R u
      const Vec3 c = r * Vec3(s[0] * cp, s[1] * cp, s[2] * cp);
      const double v = squared_distance(ca, resample_rigid(cb, r, c));
      if (v < best_v) {
        best_v = v;
        best_r = r;
        best_c = c;
      }
    }
  }

  const double p = a.pitch();
  constexpr double angle_unit = 0.05;  // radians per parameter unit
  auto unpack = [&](const std::vector<double>& x, Rotation& r, Vec3& c) {
    r = exp_map(Vec3(x[0], x[1], x[2]) * angle_unit) * best_r;
    c = best_c + Vec3(x[3], x[4], x[5]) * p;
  };
  auto objective = [&](const std::vector<double>& x) {
    Rotation r;
    Vec3 c;
    unpack(x, r, c);
    return squared_distance(a, resample_rigid(b, r, c));
  };
  VolumeAlignment out;
  out.coarse_objective = objective(std::vector<double>(6, 0.0));
  NelderMeadOptions nm;
  nm.initial_step = 1.0;
  nm.tolerance = 1e-3;
  nm.max_evaluations = 800;
  const auto res = nelder_mead(objective, std::vector<double>(6, 0.0), nm);
  if (res.value <= out.coarse_objective) {
    unpack(res.x, out.rotation, out.shift);
    out.objective = res.value;
  } else {
    out.rotation = best_r;
    out.shift = best_c;
    out.objective = out.coarse_objective;
  }
  return out;
}

RealVolume real_part(const ComplexVolume& f) {
  RealVolume out(f.size(), f.pitch());
  for (std::size_t i = 0; i < f.count(); ++i) out[i] = f[i].real();
  return out;
}

double masked_relative_l2(const RealVolume& est, const RealVolume& ref, const RealVolume& mask) {
  check_same_grid(est, ref);
  check_same_grid(est, mask);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < est.count(); ++i) {
    if (mask[i] == 0.0) continue;
    num += std::pow(est[i] - ref[i], 2);
    den += ref[i] * ref[i];
  }
  if (!(den > 0.0)) throw Error("empty or zero reference inside the mask");
  return std::sqrt(num / den);
}

}  // namespace ccodt
