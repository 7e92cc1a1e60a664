#include "ccodt/energy.hpp"

#include <algorithm>
#include <cmath>

namespace ccodt {

CartesianEnergyGrid nu_cartesian(const FieldImage& m, double k0, double band, int oversample) {
  if (oversample < 1) throw Error("oversampling factor must be at least 1");
  FieldImage padded(m.size() * oversample, m.pitch());
  const int offset = (oversample - 1) * m.size() / 2;
  for (int iy = 0; iy < m.size(); ++iy)
    for (int ix = 0; ix < m.size(); ++ix) padded(iy + offset, ix + offset) = m(iy, ix);
  const SpectrumImage spectrum = fft2_centered(padded);
  CartesianEnergyGrid out{Grid2<double>(spectrum.size(), spectrum.pitch()), k0, band};
  const double limit = band * k0;
  for (int iy = 0; iy < spectrum.size(); ++iy)
    for (int ix = 0; ix < spectrum.size(); ++ix) {
      const double r2 = std::pow(spectrum.coord(ix), 2) + std::pow(spectrum.coord(iy), 2);
      if (std::sqrt(r2) < limit) out.nu(iy, ix) = 2.0 / kPi * (k0 * k0 - r2) * std::norm(spectrum(iy, ix));
    }
  return out;
}

std::vector<double> default_radii(int count, double k0, double fraction) {
  if (count < 2) throw Error("need at least two radii");
  std::vector<double> r(count);
  for (int n = 0; n < count; ++n) r[n] = n * fraction * k0 / count;
  return r;
}

PolarEnergyGrid nu_polar(const FieldStack& m, std::span<const double> radii, int half_angles,
                         const NdftOptions& opts) {
  if (half_angles < 2) throw Error("need at least two angles on the half circle");
  if (radii.size() < 2) throw Error("need at least two radii");
  const double k0 = m.k0();
  for (std::size_t n = 0; n < radii.size(); ++n) {
    if (radii[n] < 0.0 || radii[n] >= k0) throw Error("radius outside [0, k0)");
    if (n > 0 && !(radii[n] > radii[n - 1])) throw Error("radii must be strictly increasing");
  }
  PolarEnergyGrid g;
  g.frames = m.count();
  g.half_angles = half_angles;
  g.radii.assign(radii.begin(), radii.end());
  g.k0 = k0;
  for (int l = 0; l < 2 * half_angles; ++l) g.angles.push_back(l * kPi / half_angles);
  g.values.resize(static_cast<std::size_t>(g.frames) * g.angle_count() * g.radii.size());

  for (int t = 0; t < g.frames; ++t) {
    const PolarSamples s = polar_samples(m.frames[t], g.radii, g.angles, opts);
    for (int l = 0; l < g.angle_count(); ++l)
      for (int n = 0; n < g.radius_count(); ++n)
        g(t, l, n) = 2.0 / kPi * (k0 * k0 - g.radii[n] * g.radii[n]) * std::norm(s(l, n));
  }
  return g;
}

std::vector<double> sobel_apply(const PolarEnergyGrid& grid, const std::vector<double>& data, int axis,
                                double dt) {
  if (axis != 0 && axis != 1) throw Error("sobel axis must be 0 (t) or 1 (phi)");
  const int frames = grid.frames, angles = grid.angle_count(), radii = grid.radius_count();
  if (frames < 3 || grid.half_angles < 2 || radii < 2) throw Error("grid too small for the Sobel stencil");
  const int half = grid.half_angles;
  auto at = [&](int t, int l, int n) {
    t = std::clamp(t, 0, frames - 1);
    if (n < 0) {
      n = -n;
      l += half;
    }
    n = std::min(n, radii - 1);
    l = ((l % angles) + angles) % angles;
    return data[grid.index(t, l, n)];
  };
  static constexpr double smooth[3] = {0.25, 0.5, 0.25};

  std::vector<double> out(data.size());
  for (int t = 0; t < frames; ++t)
    for (int l = 0; l < angles; ++l)
      for (int n = 0; n < radii; ++n) {
        double acc = 0.0;
        if (axis == 0) {
          int lo = t - 1, hi = t + 1;
          double span = 2.0;
          if (t == 0) lo = 0, span = 1.0;
          if (t == frames - 1) hi = frames - 1, span = 1.0;
          for (int a = -1; a <= 1; ++a)
            for (int b = -1; b <= 1; ++b)
              acc += smooth[a + 1] * smooth[b + 1] * (at(hi, l + a, n + b) - at(lo, l + a, n + b));
          acc /= span * dt;
        } else {
          for (int a = -1; a <= 1; ++a)
            for (int b = -1; b <= 1; ++b)
              acc += smooth[a + 1] * smooth[b + 1] * (at(t + a, l + 1, n + b) - at(t + a, l - 1, n + b));
          acc /= 2.0 * grid.angle_step();
        }
        out[grid.index(t, l, n)] = acc;
      }
  return out;
}

void sobel_derivatives(PolarEnergyGrid& grid, double dt) {
  grid.dt = sobel_apply(grid, grid.values, 0, dt);
  grid.dphi = sobel_apply(grid, grid.values, 1, dt);
}

std::vector<double> dphi_nu_spectral(const FieldImage& m, std::span<const double> radii,
                                     std::span<const double> angles, double k0, const NdftOptions& opts) {
  FieldImage m1(m.size(), m.pitch()), m2(m.size(), m.pitch());
  for (int iy = 0; iy < m.size(); ++iy)
    for (int ix = 0; ix < m.size(); ++ix) {
      m1(iy, ix) = Complex(0.0, -m.coord(ix)) * m(iy, ix);
      m2(iy, ix) = Complex(0.0, -m.coord(iy)) * m(iy, ix);
    }
  const PolarSamples f = polar_samples(m, radii, angles, opts);
  const PolarSamples g1 = polar_samples(m1, radii, angles, opts);
  const PolarSamples g2 = polar_samples(m2, radii, angles, opts);
  std::vector<double> out(f.values.size());
  for (int l = 0; l < f.n_angles; ++l) {
    const double s = std::sin(angles[l]), c = std::cos(angles[l]);
    for (int n = 0; n < f.n_radii; ++n) {
      const double r = radii[n];
      const Complex tangential = -s * g1(l, n) + c * g2(l, n);
      out[static_cast<std::size_t>(l) * f.n_radii + n] =
          4.0 / kPi * (k0 * k0 - r * r) * r * (std::conj(f(l, n)) * tangential).real();
    }
  }
  return out;
}

void spectral_dphi(PolarEnergyGrid& grid, const FieldStack& m, const NdftOptions& opts) {
  if (m.count() != grid.frames) throw Error("stack length does not match the energy grid");
  grid.dphi.assign(grid.values.size(), 0.0);
  for (int t = 0; t < grid.frames; ++t) {
    const auto d = dphi_nu_spectral(m.frames[t], grid.radii, grid.angles, grid.k0, opts);
    std::copy(d.begin(), d.end(), grid.dphi.begin() + grid.index(t, 0, 0));
  }
}

}  // namespace ccodt
