#include "ccodt/simulate.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace ccodt {

Phantom make_phantom(const PhantomSpec& spec) {
  if (spec.supersample < 1) throw Error("supersample must be at least 1");
  if (spec.bead_count < 0 || spec.bead_radius < 0.0) throw Error("invalid bead parameters");
  const double half_extent = 0.5 * spec.grid * spec.pitch;
  if ((spec.semi_axes.array() <= 0.0).any() || spec.semi_axes.maxCoeff() >= half_extent)
    throw Error("ellipsoid does not fit into the grid");

  Phantom out;
  out.n0 = spec.n0;
  out.wavelength = spec.wavelength;
  out.n = RealVolume(spec.grid, spec.pitch, spec.n0);

  // Bead centers stay inside the ellipsoid shrunk by one bead radius.
  const Vec3 inner = spec.semi_axes.array() - spec.bead_radius;
  if (spec.bead_count > 0 && (inner.array() <= 0.0).any()) throw Error("beads larger than ellipsoid");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const int max_tries = 10000;
  for (int b = 0; b < spec.bead_count; ++b) {
    bool placed = false;
    for (int attempt = 0; attempt < max_tries && !placed; ++attempt) {
      const Vec3 u(unit(rng), unit(rng), unit(rng));
      if (u.squaredNorm() > 1.0) continue;
      const Vec3 c = u.cwiseProduct(inner);
      const bool overlaps = std::any_of(out.bead_centers.begin(), out.bead_centers.end(),
                                        [&](const Vec3& o) { return (o - c).norm() < 2.0 * spec.bead_radius; });
      if (overlaps) continue;
      out.bead_centers.push_back(c);
      placed = true;
    }
    if (!placed) throw Error("bead placement failed after " + std::to_string(max_tries) + " tries");
  }

  const int n = spec.grid, s = spec.supersample;
  const double r2 = spec.bead_radius * spec.bead_radius;
  auto index_at = [&](const Vec3& x) {
    for (const Vec3& c : out.bead_centers)
      if ((x - c).squaredNorm() <= r2) return spec.n_bead;
    if (x.cwiseQuotient(spec.semi_axes).squaredNorm() <= 1.0) return spec.n_ellipsoid;
    return spec.n0;
  };
  for (int iz = 0; iz < n; ++iz)
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        const Vec3 x(out.n.coord(ix), out.n.coord(iy), out.n.coord(iz));
        // Cheap reject for voxels well outside the ellipsoid.
        if (x.cwiseQuotient(spec.semi_axes).norm() > 1.0 + 2.0 * spec.pitch / spec.semi_axes.minCoeff())
          continue;
        double acc = 0.0;
        for (int a = 0; a < s; ++a)
          for (int b = 0; b < s; ++b)
            for (int c = 0; c < s; ++c) {
              const Vec3 off((c + 0.5) / s - 0.5, (b + 0.5) / s - 0.5, (a + 0.5) / s - 0.5);
              acc += index_at(x + spec.pitch * off);
            }
        out.n(iz, iy, ix) = acc / (s * s * s);
      }
  return out;
}

ComplexVolume n_to_f(const RealVolume& n, double n0, double k0) {
  ComplexVolume f(n.size(), n.pitch());
  const double k2 = k0 * k0;
  for (std::size_t i = 0; i < n.count(); ++i) {
    if (n[i] < 0.0) throw Error("negative refractive index");
    f[i] = k2 * (n[i] * n[i] / (n0 * n0) - 1.0);
  }
  return f;
}

ComplexVolume n_to_f(const Phantom& p) { return n_to_f(p.n, p.n0, p.k0()); }

RealVolume f_to_n(const ComplexVolume& f, double n0, double k0, std::size_t* clamped) {
  RealVolume n(f.size(), f.pitch());
  if (clamped != nullptr) *clamped = 0;
  for (std::size_t i = 0; i < f.count(); ++i) {
    double rad = f[i].real() / (k0 * k0) + 1.0;
    if (rad < 0.0) {
      if (clamped == nullptr) throw Error("nonphysical potential at voxel " + std::to_string(i));
      ++*clamped;
      rad = 0.0;
    }
    n[i] = n0 * std::sqrt(rad);
  }
  return n;
}

template <typename T>
Grid3<T> apply_rigid_motion(const Grid3<T>& vol, const Rotation& r, const Vec3& d) {
  const int n = vol.size();
  const double p = vol.pitch();
  Grid3<T> out(n, p);
  const Mat3& m = r.matrix();
  auto at = [&](int iz, int iy, int ix) -> T {
    if (iz < 0 || iy < 0 || ix < 0 || iz >= n || iy >= n || ix >= n) return T{};
    return vol(iz, iy, ix);
  };
  for (int iz = 0; iz < n; ++iz)
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        const Vec3 x(vol.coord(ix), vol.coord(iy), vol.coord(iz));
        const Vec3 u = (m * (x - d)) / p + Vec3::Constant(n / 2);
        const double fx = std::floor(u(0)), fy = std::floor(u(1)), fz = std::floor(u(2));
        const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy), z0 = static_cast<int>(fz);
        if (x0 < -1 || y0 < -1 || z0 < -1 || x0 >= n || y0 >= n || z0 >= n) continue;
        const double ax = u(0) - fx, ay = u(1) - fy, az = u(2) - fz;
        T acc{};
        for (int c = 0; c < 2; ++c)
          for (int b = 0; b < 2; ++b)
            for (int a = 0; a < 2; ++a) {
              const double w = (a ? ax : 1 - ax) * (b ? ay : 1 - ay) * (c ? az : 1 - az);
              if (w != 0.0) acc += w * at(z0 + c, y0 + b, x0 + a);
            }
        out(iz, iy, ix) = acc;
      }
  return out;
}

template RealVolume apply_rigid_motion(const RealVolume&, const Rotation&, const Vec3&);
template ComplexVolume apply_rigid_motion(const ComplexVolume&, const Rotation&, const Vec3&);

FieldImage born_measure(const Ndft3Evaluator& f_hat, const MeasurementGeometry& g,
                        const Rotation& r, const Vec3& d) {
  const double k0 = g.k0();
  const auto band = band_nodes(g);
  std::vector<Vec3> nodes(band.size());
  for (std::size_t j = 0; j < band.size(); ++j) nodes[j] = r * lift(band[j].k, k0);
  const auto values = f_hat(nodes);

  SpectrumImage spectrum(g.n, g.dk());
  const double c = std::sqrt(kPi / 2.0);
  for (std::size_t j = 0; j < band.size(); ++j) {
    const Vec2& k = band[j].k;
    const double kap = kappa(k, k0);
    const Vec3 h = lift(k, k0);
    const Complex factor = c * Complex(0.0, 1.0) * std::exp(Complex(0.0, kap * g.r_m)) / kap;
    spectrum(band[j].iy, band[j].ix) = factor * values[j] * std::exp(Complex(0.0, -d.dot(h)));
  }
  return ifft2_centered(spectrum);
}

FieldImage born_measure(const ComplexVolume& f, const MeasurementGeometry& g, const Rotation& r,
                        const Vec3& d, const NdftOptions& opts) {
  return born_measure(Ndft3Evaluator(f, opts), g, r, d);
}

FieldImage bpm_measure(const RealVolume& n, const MeasurementGeometry& g, const Rotation& r,
                       const Vec3& d) {
  if (n.size() != g.n || std::abs(n.pitch() - g.pitch) > 1e-12 * g.pitch)
    throw Error("BPM volume grid must match the detector grid");
  const int size = g.n;
  const double p = g.pitch, k0 = g.k0();
  // Resample the contrast so that reads outside the grid see background.
  RealVolume contrast = n;
  for (auto& v : contrast.data()) v -= g.n0;
  const RealVolume moved = apply_rigid_motion(contrast, r, d);

  std::vector<Complex> field(static_cast<std::size_t>(size) * size);
  auto* ptr = reinterpret_cast<fftw_complex*>(field.data());
  fftw_plan fwd = fftw_plan_dft_2d(size, size, ptr, ptr, FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_plan bwd = fftw_plan_dft_2d(size, size, ptr, ptr, FFTW_BACKWARD, FFTW_ESTIMATE);

  // kz for each FFT-ordered frequency; zero marks evanescent components.
  const double dk = g.dk();
  std::vector<double> kz(field.size());
  std::vector<char> live(field.size());
  for (int jy = 0; jy < size; ++jy)
    for (int jx = 0; jx < size; ++jx) {
      const double ky = (jy < size / 2 ? jy : jy - size) * dk;
      const double kx = (jx < size / 2 ? jx : jx - size) * dk;
      const double q = k0 * k0 - kx * kx - ky * ky;
      const std::size_t i = static_cast<std::size_t>(jy) * size + jx;
      live[i] = q > 0.0;
      kz[i] = q > 0.0 ? std::sqrt(q) : 0.0;
    }
  const double inv = 1.0 / (static_cast<double>(size) * size);
  auto propagate = [&](double dist) {
    if (dist == 0.0) return;
    fftw_execute(fwd);
    for (std::size_t i = 0; i < field.size(); ++i)
      field[i] = live[i] ? field[i] * std::exp(Complex(0.0, kz[i] * dist)) * inv : Complex{};
    fftw_execute(bwd);
  };

  // Screens sit at the voxel centers; the plane wave e^{i k0 x3} enters at
  // the first of them.
  std::fill(field.begin(), field.end(), std::exp(Complex(0.0, k0 * moved.coord(0))));
  for (int iz = 0; iz < size; ++iz) {
    if (iz > 0) propagate(p);
    for (int iy = 0; iy < size; ++iy)
      for (int ix = 0; ix < size; ++ix) {
        const double dn = moved(iz, iy, ix) / g.n0;
        if (dn != 0.0) field[static_cast<std::size_t>(iy) * size + ix] *= std::exp(Complex(0.0, k0 * dn * p));
      }
  }
  propagate(g.r_m - moved.coord(size - 1));
  fftw_destroy_plan(fwd);
  fftw_destroy_plan(bwd);

  FieldImage out(size, p);
  std::copy(field.begin(), field.end(), out.data().begin());
  return out;
}

RotationTrajectory constant_rotation(int frames, const Vec3& axis, double step, const Vec3& drift,
                                     const Rotation& r0) {
  if (frames < 0) throw Error("negative frame count");
  if (axis.norm() == 0.0) throw Error("rotation axis must be nonzero");
  const Vec3 unit = axis.normalized();
  RotationTrajectory traj;
  for (int t = 0; t < frames; ++t) {
    traj.frames.push_back(r0 * exp_map(unit * (step * t)));
    traj.translations.push_back(drift * t);
  }
  return traj;
}

namespace {

FieldStack empty_stack(const MeasurementGeometry& g) {
  FieldStack s;
  s.wavelength = g.wavelength;
  s.n0 = g.n0;
  s.r_m = g.r_m;
  return s;
}

Vec3 translation_at(const RotationTrajectory& traj, int t) {
  return traj.has_translations() ? traj.translations[t] : Vec3::Zero();
}

}  // namespace

FieldStack born_stack(const ComplexVolume& f, const RotationTrajectory& traj,
                      const MeasurementGeometry& g, const NdftOptions& opts) {
  const Ndft3Evaluator f_hat(f, opts);
  FieldStack s = empty_stack(g);
  for (int t = 0; t < traj.size(); ++t)
    s.frames.push_back(born_measure(f_hat, g, traj.frames[t], translation_at(traj, t)));
  return s;
}

FieldStack born_total_stack(const ComplexVolume& f, const RotationTrajectory& traj,
                            const MeasurementGeometry& g, const NdftOptions& opts) {
  FieldStack s = born_stack(f, traj, g, opts);
  const Complex inc = std::exp(Complex(0.0, g.k0() * g.r_m));
  for (auto& frame : s.frames)
    for (auto& v : frame.data()) v += inc;
  return s;
}

FieldStack bpm_stack(const RealVolume& n, const RotationTrajectory& traj,
                     const MeasurementGeometry& g) {
  FieldStack s = empty_stack(g);
  for (int t = 0; t < traj.size(); ++t)
    s.frames.push_back(bpm_measure(n, g, traj.frames[t], translation_at(traj, t)));
  return s;
}

FieldStack add_noise(const FieldStack& stack, const NoiseSpec& spec) {
  if (spec.sigma < 0.0) throw Error("noise sigma must be nonnegative");
  FieldStack out = stack;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double offset = std::uniform_real_distribution<double>(0.0, 2.0 * kPi)(rng);
  const int count = stack.count();
  for (int t = 0; t < count; ++t) {
    const Complex drift =
        std::exp(Complex(0.0, spec.drift_amplitude * std::sin(2.0 * kPi * t / count + offset)));
    for (auto& v : out.frames[t].data()) {
      const double re = gauss(rng), im = gauss(rng);
      v = v * drift + spec.sigma * Complex(re, im);
    }
  }
  return out;
}

FieldStack add_noise(const FieldStack& stack, const FieldStack& noise) {
  if (noise.count() != stack.count() || noise.size() != stack.size())
    throw Error("noise clip shape does not match the stack");
  FieldStack out = stack;
  for (int t = 0; t < stack.count(); ++t)
    for (std::size_t i = 0; i < out.frames[t].count(); ++i) out.frames[t][i] += noise.frames[t][i];
  return out;
}

double sigma_for_snr(const FieldStack& signal, double snr_db) {
  double power = 0.0;
  std::size_t count = 0;
  for (const auto& f : signal.frames) {
    for (const auto& v : f.data()) power += std::norm(v);
    count += f.count();
  }
  if (count == 0) throw Error("empty signal stack");
  return std::sqrt(power / count / (2.0 * std::pow(10.0, snr_db / 10.0)));
}

}  // namespace ccodt
