#pragma once

#include "ccodt/types.hpp"

#include <cmath>
#include <vector>

namespace ccodt {

/// Detector and illumination parameters shared by the forward models and
/// the reconstruction.
struct MeasurementGeometry {
  int n = 64;               // pixels per side
  double pitch = 0.15;      // pixel size
  double wavelength = 0.64; // vacuum wavelength
  double n0 = 1.33;         // background refractive index
  double r_m = 0.0;         // measurement plane at x3 = r_m
  double band = 0.99;       // use frequencies with |k| < band * k0

  double k0() const { return 2.0 * kPi * n0 / wavelength; }
  double dk() const { return 2.0 * kPi / (n * pitch); }

  static MeasurementGeometry of(const FieldStack& stack, double band = 0.99) {
    return {stack.size(), stack.pitch(), stack.wavelength, stack.n0, stack.r_m, band};
  }
};

inline double kappa(const Vec2& k, double k0) { return std::sqrt(k0 * k0 - k.squaredNorm()); }

/// Lift of a detector frequency onto the Ewald hemisphere of radius k0
/// centered at -k0 e3.
inline Vec3 lift(const Vec2& k, double k0) { return {k(0), k(1), kappa(k, k0) - k0}; }

/// A frequency sample of the centered detector grid.
struct BandNode {
  int iy = 0, ix = 0;
  Vec2 k;
};

/// Grid frequencies strictly inside the band, in row-major order.
inline std::vector<BandNode> band_nodes(const MeasurementGeometry& g) {
  std::vector<BandNode> out;
  const double dk = g.dk(), limit = g.band * g.k0();
  for (int iy = 0; iy < g.n; ++iy)
    for (int ix = 0; ix < g.n; ++ix) {
      const Vec2 k((ix - g.n / 2) * dk, (iy - g.n / 2) * dk);
      if (k.norm() < limit) out.push_back({iy, ix, k});
    }
  return out;
}

}  // namespace ccodt
