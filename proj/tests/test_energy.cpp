#include "ccodt/energy.hpp"
#include "ccodt/simulate.hpp"

#include "doctest.h"
#include "test_util.hpp"

#include <cmath>
#include <random>

using namespace ccodt;
using namespace ccodt::testing;

namespace {

MeasurementGeometry geometry32() {
  MeasurementGeometry g;
  g.n = 32;
  g.r_m = 0.6;
  return g;
}

ComplexVolume small_object() {
  PhantomSpec spec;
  spec.grid = 32;
  spec.semi_axes = Vec3(1.8, 1.5, 1.2);
  spec.bead_count = 5;
  spec.bead_radius = 0.3;
  return n_to_f(make_phantom(spec));
}

FieldStack stack_of(const FieldImage& img, int frames, const MeasurementGeometry& g) {
  FieldStack s;
  s.wavelength = g.wavelength;
  s.n0 = g.n0;
  s.r_m = g.r_m;
  s.frames.assign(frames, img);
  return s;
}

// Smooth, asymmetric test field.
FieldImage gaussian_field(int n, double pitch, double sx, double sy, double cx, double cy) {
  FieldImage img(n, pitch);
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      const double x = img.coord(ix) - cx, y = img.coord(iy) - cy;
      img(iy, ix) = std::exp(-0.5 * (x * x / (sx * sx) + y * y / (sy * sy))) * Complex(1.0, 0.3 * x);
    }
  return img;
}

PolarEnergyGrid synthetic_grid(int frames, int half, int radii) {
  PolarEnergyGrid g;
  g.frames = frames;
  g.half_angles = half;
  g.k0 = 10.0;
  g.radii = default_radii(radii, g.k0);
  for (int l = 0; l < 2 * half; ++l) g.angles.push_back(l * kPi / half);
  g.values.assign(static_cast<std::size_t>(frames) * 2 * half * radii, 0.0);
  return g;
}

}  // namespace

TEST_CASE("nu_cartesian") {
  const MeasurementGeometry g = geometry32();
  const double k0 = g.k0();

  SUBCASE("zero field") {
    const auto e = nu_cartesian(FieldImage(32, 0.15), k0);
    for (double v : e.nu.data()) CHECK(v == 0.0);
  }

  const ComplexVolume f = small_object();
  const FieldImage m = born_measure(f, g, Rotation::identity(), Vec3::Zero());
  const auto e = nu_cartesian(m, k0);

  SUBCASE("equals the squared object spectrum on the hemisphere") {
    const auto nodes = band_nodes(g);
    std::vector<Vec3> lifted;
    for (const auto& node : nodes) lifted.push_back(lift(node.k, k0));
    const auto f_hat = ndft3(f, lifted, {NdftMethod::Direct});
    double worst = 0, scale = 0;
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      const double ref = std::norm(f_hat[j]);
      scale = std::max(scale, ref);
      worst = std::max(worst, std::abs(e.nu(nodes[j].iy, nodes[j].ix) - ref));
    }
    CHECK(worst <= 1e-8 * scale);
  }

  SUBCASE("translation invariant") {
    const FieldImage moved = born_measure(f, g, Rotation::identity(), Vec3(0.4, -0.7, 0.9));
    const auto e2 = nu_cartesian(moved, k0);
    double worst = 0, scale = 0;
    for (std::size_t i = 0; i < e.nu.count(); ++i) {
      scale = std::max(scale, e.nu[i]);
      worst = std::max(worst, std::abs(e.nu[i] - e2.nu[i]));
    }
    CHECK(worst <= 1e-9 * scale);
  }

  SUBCASE("nonnegative and zero outside the band") {
    for (int iy = 0; iy < 32; ++iy)
      for (int ix = 0; ix < 32; ++ix) {
        CHECK(e.nu(iy, ix) >= 0.0);
        if (std::hypot(e.nu.coord(ix), e.nu.coord(iy)) >= 0.99 * k0) CHECK(e.nu(iy, ix) == 0.0);
      }
  }
}

TEST_CASE("nu_polar") {
  const MeasurementGeometry g = geometry32();
  const double k0 = g.k0();
  const ComplexVolume f = small_object();
  const FieldStack m = born_stack(f, constant_rotation(3, Vec3::UnitY(), 0.1), g);

  SUBCASE("agrees with the Cartesian grid at shared nodes") {
    std::vector<double> radii;
    for (int j = 0; j < 8; ++j) radii.push_back(j * g.dk());
    const auto polar = nu_polar(m, radii, 2, {NdftMethod::Direct});
    const auto cart = nu_cartesian(m.frames[1], k0);
    double worst = 0, scale = 0;
    for (int j = 0; j < 8; ++j) {
      // angles 0, pi/2, pi, 3pi/2 land on the axes of the Cartesian grid
      const double pairs[4][2] = {{double(16), double(16 + j)}, {double(16 + j), 16.0},
                                  {16.0, double(16 - j)}, {double(16 - j), 16.0}};
      for (int l = 0; l < 4; ++l) {
        const double ref = cart.nu(int(pairs[l][0]), int(pairs[l][1]));
        scale = std::max(scale, ref);
        worst = std::max(worst, std::abs(polar(1, l, j) - ref));
      }
    }
    CHECK(worst <= 1e-10 * scale);
  }

  const auto radii = default_radii(12, k0);
  const auto polar = nu_polar(m, radii, 16);

  SUBCASE("origin row is constant in angle") {
    for (int t = 0; t < 3; ++t)
      for (int l = 1; l < polar.angle_count(); ++l) CHECK(polar(t, l, 0) == doctest::Approx(polar(t, 0, 0)).epsilon(1e-12));
  }

  SUBCASE("zero stack") {
    const auto z = nu_polar(stack_of(FieldImage(32, 0.15), 3, g), radii, 4);
    for (double v : z.values) CHECK(v == 0.0);
  }

  SUBCASE("layout") {
    CHECK(polar.angle_count() == 32);
    CHECK(polar.angles[16] == doctest::Approx(kPi));
    CHECK(polar.values.size() == 3u * 32 * 12);
    for (double v : polar.values) CHECK(v >= 0.0);
  }

  SUBCASE("radius outside the disk") {
    const std::vector<double> bad{0.0, k0};
    CHECK_THROWS_AS(nu_polar(m, bad, 4), Error);
  }
}

TEST_CASE("sobel_derivatives") {
  SUBCASE("constant in time") {
    auto g = synthetic_grid(5, 8, 6);
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0, 1);
    for (int l = 0; l < 16; ++l)
      for (int n = 0; n < 6; ++n) {
        const double v = u(rng);
        for (int t = 0; t < 5; ++t) g(t, l, n) = v;
      }
    sobel_derivatives(g);
    for (double v : g.dt) CHECK(std::abs(v) < 1e-15);
  }

  SUBCASE("linear ramp in time") {
    auto g = synthetic_grid(6, 8, 6);
    for (int t = 0; t < 6; ++t)
      for (int l = 0; l < 16; ++l)
        for (int n = 0; n < 6; ++n) g(t, l, n) = 0.7 * t + 2.0;
    sobel_derivatives(g, 1.0);
    for (double v : g.dt) CHECK(std::abs(v - 0.7) < 1e-12);
    sobel_derivatives(g, 0.5);
    for (double v : g.dt) CHECK(std::abs(v - 1.4) < 1e-12);
  }

  SUBCASE("angular sine") {
    auto g = synthetic_grid(4, 45, 6);
    for (int t = 0; t < 4; ++t)
      for (int l = 0; l < 90; ++l)
        for (int n = 0; n < 6; ++n) g(t, l, n) = std::sin(2 * g.angles[l]);
    sobel_derivatives(g);
    const double h = g.angle_step();
    // central difference of sin(2 phi): 2 cos(2 phi) sin(2h) / (2h)
    const double bound = 2.0 * (1.0 - std::sin(2 * h) / (2 * h)) + 1e-12;
    double worst = 0;
    for (int t = 0; t < 4; ++t)
      for (int l = 0; l < 90; ++l)
        for (int n = 0; n < 6; ++n) worst = std::max(worst, std::abs(g.dphi[g.index(t, l, n)] - 2 * std::cos(2 * g.angles[l])));
    CHECK(worst <= bound);
    CHECK(bound < 0.01);
  }

  SUBCASE("too small") {
    auto g = synthetic_grid(2, 8, 6);
    CHECK_THROWS_AS(sobel_derivatives(g), Error);
  }
}

TEST_CASE("dphi_nu_spectral") {
  const MeasurementGeometry g = geometry32();
  const double k0 = g.k0();
  const auto radii = default_radii(16, k0);
  std::vector<double> angles;
  for (int l = 0; l < 72; ++l) angles.push_back(l * kPi / 36);

  SUBCASE("zero field") {
    for (double v : dphi_nu_spectral(FieldImage(32, 0.15), radii, angles, k0)) CHECK(v == 0.0);
  }

  const FieldImage m = gaussian_field(32, 0.15, 0.35, 0.22, 0.3, -0.2);

  SUBCASE("matches a finite difference of nu") {
    const double h = 1e-5;
    const auto d = dphi_nu_spectral(m, radii, angles, k0, {NdftMethod::Direct});
    auto nu_at = [&](double r, double phi) {
      const std::vector<Vec2> node{Vec2(r * std::cos(phi), r * std::sin(phi))};
      return 2 / kPi * (k0 * k0 - r * r) * std::norm(ndft2(m, node, {NdftMethod::Direct})[0]);
    };
    double worst = 0, scale = 0;
    for (int l = 0; l < 72; l += 7)
      for (int n = 0; n < 16; n += 3) {
        const double fd = (nu_at(radii[n], angles[l] + h) - nu_at(radii[n], angles[l] - h)) / (2 * h);
        scale = std::max(scale, std::abs(fd));
        worst = std::max(worst, std::abs(d[l * 16 + n] - fd));
      }
    CHECK(worst <= 1e-6 * scale);
  }

  SUBCASE("radially symmetric field") {
    const FieldImage iso = gaussian_field(32, 0.15, 0.3, 0.3, 0.0, 0.0);
    FieldImage real_iso(32, 0.15);
    for (std::size_t i = 0; i < iso.count(); ++i) real_iso[i] = iso[i].real();
    const auto d = dphi_nu_spectral(real_iso, radii, angles, k0);
    double nu_max = 0;
    const auto s = polar_samples(real_iso, radii, angles);
    for (std::size_t i = 0; i < s.values.size(); ++i) nu_max = std::max(nu_max, 2 / kPi * k0 * k0 * std::norm(s.values[i]));
    for (double v : d) CHECK(std::abs(v) <= 1e-6 * nu_max);
  }

  SUBCASE("agrees with the Sobel angular derivative") {
    // default polar grid of a 64-pixel frame: N/2 radii, L = 180
    MeasurementGeometry g64 = g;
    g64.n = 64;
    FieldStack s = stack_of(gaussian_field(64, 0.15, 0.35, 0.22, 0.3, -0.2), 3, g64);
    auto grid = nu_polar(s, default_radii(32, k0), 180);
    sobel_derivatives(grid);
    const std::vector<double> sobel = grid.dphi;
    spectral_dphi(grid, s);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < sobel.size(); ++i) {
      num += std::pow(sobel[i] - grid.dphi[i], 2);
      den += std::pow(grid.dphi[i], 2);
    }
    CHECK(std::sqrt(num / den) <= 5e-2);
  }
}

TEST_CASE("polar energy under object translation") {
  const MeasurementGeometry g = geometry32();
  const ComplexVolume f = small_object();
  const auto traj = constant_rotation(3, Vec3::UnitY(), 0.2);
  RotationTrajectory moved = traj;
  for (int t = 0; t < 3; ++t) moved.translations[t] = Vec3(0.3 * t, -0.2, 0.5);
  const FieldStack ma = born_stack(f, traj, g), mb = born_stack(f, moved, g);

  auto rel = [](const PolarEnergyGrid& a, const PolarEnergyGrid& b) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      num += std::pow(a.values[i] - b.values[i], 2);
      den += std::pow(a.values[i], 2);
    }
    return std::sqrt(num / den);
  };

  SUBCASE("nodes on the DFT grid") {
    std::vector<double> radii;
    for (int j = 0; j < 10; ++j) radii.push_back(j * g.dk());
    CHECK(rel(nu_polar(ma, radii, 2), nu_polar(mb, radii, 2)) <= 1e-9);
  }

  SUBCASE("off-grid nodes") {
    // trigonometric interpolation of a truncated frame is not phase-blind
    const auto radii = default_radii(12, g.k0());
    MESSAGE("relative polar difference off the DFT grid: " << rel(nu_polar(ma, radii, 16), nu_polar(mb, radii, 16)));
  }
}
