#include "ccodt/preprocess.hpp"
#include "ccodt/simulate.hpp"

#include "doctest.h"
#include "test_util.hpp"

#include <cmath>
#include <random>

using namespace ccodt;
using namespace ccodt::testing;

namespace {

FieldStack constant_stack(int frames, int n, double pitch, Complex value) {
  FieldStack s;
  for (int t = 0; t < frames; ++t) s.frames.emplace_back(n, pitch, value);
  return s;
}

double stack_rel_l2(const FieldStack& a, const FieldStack& b) {
  double num = 0, den = 0;
  for (int t = 0; t < a.count(); ++t)
    for (std::size_t i = 0; i < a.frames[t].count(); ++i) {
      num += std::norm(a.frames[t][i] - b.frames[t][i]);
      den += std::norm(b.frames[t][i]);
    }
  return std::sqrt(num / den);
}

// Disk of radius r pixels centered at pixel coordinates (cx, cy).
FieldImage disk(int n, double cx, double cy, double r) {
  FieldImage img(n, 1.0);
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix)
      if (std::hypot(ix - cx, iy - cy) <= r) img(iy, ix) = 1.0;
  return img;
}

}  // namespace

TEST_CASE("estimate_incident") {
  SUBCASE("constant frame") {
    const auto inc = estimate_incident(constant_stack(3, 8, 0.1, std::polar(2.5, 0.7)));
    for (int t = 0; t < 3; ++t) {
      CHECK(inc.phase[t] == doctest::Approx(0.7).epsilon(1e-14));
      CHECK(inc.amplitude[t] == doctest::Approx(2.5).epsilon(1e-14));
    }
  }

  SUBCASE("small object patch does not move the medians") {
    const Complex plane = std::polar(1.2, -0.4);
    FieldStack s = constant_stack(1, 16, 0.1, plane);
    for (int iy = 4; iy < 10; ++iy)
      for (int ix = 3; ix < 11; ++ix) s.frames[0](iy, ix) = std::polar(3.0, 1.5);
    const auto inc = estimate_incident(s);
    CHECK(inc.phase[0] == std::arg(plane));
    CHECK(inc.amplitude[0] == std::abs(plane));
  }

  SUBCASE("lower median for even counts") {
    FieldStack s = constant_stack(1, 2, 0.1, 1.0);
    s.frames[0][0] = 1.0;
    s.frames[0][1] = 2.0;
    s.frames[0][2] = 3.0;
    s.frames[0][3] = 4.0;
    CHECK(estimate_incident(s).amplitude[0] == 2.0);
  }

  SUBCASE("homogeneous beam propagation") {
    MeasurementGeometry g;
    g.n = 16;
    g.r_m = 2.3;
    const RealVolume n(16, g.pitch, g.n0);
    FieldStack s;
    s.frames.push_back(bpm_measure(n, g, Rotation::identity(), Vec3::Zero()));
    const auto inc = estimate_incident(s);
    CHECK(std::abs(std::remainder(inc.phase[0] - g.k0() * g.r_m, 2 * kPi)) < 1e-8);
  }
}

TEST_CASE("born_subtract") {
  const Complex u_inc = std::polar(1.0, 0.3);
  const FieldStack s = constant_stack(2, 8, 0.1, u_inc);
  const auto inc = estimate_incident(s);
  for (const auto& f : born_subtract(s, inc).frames)
    for (const auto& v : f.data()) CHECK(std::abs(v) < 1e-15);

  SUBCASE("adding the incident field back") {
    std::mt19937_64 rng(31);
    FieldStack r = s;
    for (auto& f : r.frames) fill_random(f, rng);
    const FieldStack u = born_subtract(r, inc);
    for (int t = 0; t < 2; ++t)
      for (std::size_t i = 0; i < u.frames[t].count(); ++i)
        CHECK(std::abs(u.frames[t][i] + std::polar(1.0, inc.phase[t]) - r.frames[t][i]) < 1e-15);
  }

  SUBCASE("recovers simulated Born fields") {
    MeasurementGeometry g;
    g.n = 32;
    g.r_m = 0.8;
    PhantomSpec spec;
    spec.grid = 32;
    spec.semi_axes = Vec3(1.8, 1.5, 1.2);
    spec.bead_count = 4;
    spec.bead_radius = 0.3;
    const ComplexVolume f = n_to_f(make_phantom(spec));
    const auto traj = constant_rotation(3, Vec3::UnitY(), 0.2);
    const FieldStack m = born_stack(f, traj, g);
    const FieldStack total = born_total_stack(f, traj, g);
    IncidentEstimate exact;
    exact.phase.assign(3, g.k0() * g.r_m);
    exact.amplitude.assign(3, 1.0);
    const FieldStack back = born_subtract(total, exact);
    double worst = 0, scale = 0;
    for (int t = 0; t < 3; ++t)
      for (std::size_t i = 0; i < back.frames[t].count(); ++i) {
        worst = std::max(worst, std::abs(back.frames[t][i] - m.frames[t][i]));
        scale = std::max(scale, std::abs(m.frames[t][i]));
      }
    CHECK(worst <= 1e-10 * scale);
  }
}

TEST_CASE("rytov_transform") {
  const Complex u_inc = std::polar(1.5, -2.0);
  const FieldStack s = constant_stack(1, 8, 0.1, u_inc);
  const auto inc = estimate_incident(s);
  const FieldStack flat = rytov_transform(s, inc);
  for (const auto& v : flat.frames[0].data()) CHECK(std::abs(v) < 1e-15);

  SUBCASE("amplitude-only perturbation") {
    FieldStack p = s;
    p.frames[0](2, 3) = u_inc * std::exp(0.05);
    const FieldStack r = rytov_transform(p, inc);
    CHECK(std::abs(r.frames[0](2, 3) - std::polar(1.0, -2.0) * 0.05) < 1e-14);
  }

  SUBCASE("phase-only perturbation") {
    FieldStack p = s;
    p.frames[0](5, 1) = u_inc * std::polar(1.0, 0.2);
    const FieldStack r = rytov_transform(p, inc);
    CHECK(std::abs(r.frames[0](5, 1) - std::polar(1.0, -2.0) * Complex(0, 0.2)) < 1e-14);
  }

  SUBCASE("phase differences are wrapped") {
    FieldStack p = s;
    p.frames[0](0, 0) = u_inc * std::polar(1.0, 3.0);
    p.frames[0](0, 1) = u_inc * std::polar(1.0, -3.0);
    const FieldStack r = rytov_transform(p, inc);
    const Complex inv = std::polar(1.0, 2.0);
    CHECK((r.frames[0](0, 0) * inv).imag() == doctest::Approx(3.0));
    CHECK((r.frames[0](0, 1) * inv).imag() == doctest::Approx(-3.0));
  }

  SUBCASE("zero amplitude is reported") {
    FieldStack p = s;
    p.frames[0](1, 2) = 0.0;
    CHECK_THROWS_WITH_AS(rytov_transform(p, inc), "zero amplitude at frame 0, pixel (1, 2)", Error);
  }

  SUBCASE("agrees with Born to first order") {
    std::mt19937_64 rng(32);
    const double eps = 1e-3;
    const Complex unit = std::polar(1.0, -2.0);
    FieldStack p = constant_stack(1, 8, 0.1, unit);
    for (auto& v : p.frames[0].data()) {
      Complex z = random_complex(rng);
      z /= std::max(1.0, std::abs(z));
      v = unit * (1.0 + eps * z);
    }
    const IncidentEstimate fixed{{-2.0}, {1.0}};
    CHECK(stack_rel_l2(rytov_transform(p, fixed), born_subtract(p, fixed)) <= 1e-2);
  }
}

TEST_CASE("soft_cutoff") {
  const double r1 = 1.0, r2 = 2.0;
  CHECK(cutoff_weight(0.5, r1, r2) == 1.0);
  CHECK(cutoff_weight(r1, r1, r2) == 1.0);
  CHECK(cutoff_weight(r2, r1, r2) == 0.0);
  CHECK(cutoff_weight(3.0, r1, r2) == 0.0);
  CHECK(cutoff_weight(1.5, r1, r2) == 0.5);
  CHECK_THROWS_AS(cutoff_weight(1.0, 2.0, 1.0), Error);

  SUBCASE("continuously differentiable") {
    const double h = 1e-6;
    for (double r : {r1, r2}) {
      const double left = (cutoff_weight(r, r1, r2) - cutoff_weight(r - h, r1, r2)) / h;
      const double right = (cutoff_weight(r + h, r1, r2) - cutoff_weight(r, r1, r2)) / h;
      CHECK(std::abs(left - right) < 1e-4);
    }
  }

  SUBCASE("applied per pixel") {
    const FieldStack s = constant_stack(1, 16, 0.25, Complex(2, 1));
    const FieldStack c = soft_cutoff(s, 1.0, 1.6);
    CHECK(c.frames[0](8, 8) == Complex(2, 1));
    CHECK(c.frames[0](8, 12) == Complex(2, 1));  // r = 1.0
    CHECK(c.frames[0](8, 15) == Complex{});      // r = 1.75
    CHECK(std::abs(c.frames[0](8, 13) - Complex(2, 1) * cutoff_weight(1.25, 1.0, 1.6)) < 1e-15);
  }
}

TEST_CASE("gaussian_smooth_3d") {
  SUBCASE("constant stack") {
    const FieldStack s = constant_stack(5, 12, 0.1, Complex(0.3, -1.1));
    const FieldStack g = gaussian_smooth_3d(s);
    for (const auto& f : g.frames)
      for (const auto& v : f.data()) CHECK(std::abs(v - Complex(0.3, -1.1)) < 1e-12);
  }

  SUBCASE("unit impulse gives the truncated kernel") {
    FieldStack s = constant_stack(9, 16, 0.1, 0.0);
    s.frames[4](8, 8) = 1.0;
    const double sigma = 0.65;
    const FieldStack g = gaussian_smooth_3d(s, sigma);
    const int radius = 3;  // ceil(4 sigma)
    double norm = 0;
    for (int j = -radius; j <= radius; ++j) norm += std::exp(-0.5 * j * j / (sigma * sigma));
    auto k = [&](int j) { return std::abs(j) > radius ? 0.0 : std::exp(-0.5 * j * j / (sigma * sigma)) / norm; };
    double worst = 0;
    for (int t = 0; t < 9; ++t)
      for (int iy = 0; iy < 16; ++iy)
        for (int ix = 0; ix < 16; ++ix)
          worst = std::max(worst, std::abs(g.frames[t](iy, ix) - k(t - 4) * k(iy - 8) * k(ix - 8)));
    CHECK(worst < 1e-15);
  }

  SUBCASE("commutes with a global phase") {
    std::mt19937_64 rng(33);
    FieldStack s = constant_stack(4, 10, 0.1, 0.0);
    for (auto& f : s.frames) fill_random(f, rng);
    const Complex c = std::polar(1.0, 0.9);
    FieldStack rotated = s;
    for (auto& f : rotated.frames)
      for (auto& v : f.data()) v *= c;
    const FieldStack a = gaussian_smooth_3d(rotated);
    const FieldStack b = gaussian_smooth_3d(s);
    for (int t = 0; t < 4; ++t)
      for (std::size_t i = 0; i < a.frames[t].count(); ++i) CHECK(std::abs(a.frames[t][i] - c * b.frames[t][i]) < 1e-14);
  }

  CHECK_THROWS_AS(gaussian_smooth_3d(constant_stack(1, 4, 0.1, 0.0), 0.0), Error);
}

TEST_CASE("estimate_shifts and recenter") {
  const int n = 64;
  SUBCASE("centered disk") {
    FieldStack s;
    s.frames.push_back(disk(n, n / 2, n / 2, 10));
    const auto est = estimate_shifts(s);
    CHECK(!est.empty[0]);
    CHECK(est.shifts[0].norm() < 0.1);
  }

  SUBCASE("translated disk") {
    FieldStack s;
    s.frames.push_back(disk(n, n / 2 + 3.0, n / 2 - 2.0, 10));
    s.frames.push_back(disk(n, n / 2 - 4.5, n / 2 + 1.25, 12));
    const auto est = estimate_shifts(s);
    CHECK((est.shifts[0] - Vec2(3.0, -2.0)).norm() < 0.3);
    CHECK((est.shifts[1] - Vec2(-4.5, 1.25)).norm() < 0.3);
    const auto again = estimate_shifts(s);
    CHECK(again.shifts[0] == est.shifts[0]);
    CHECK(again.shifts[1] == est.shifts[1]);

    const auto fixed = estimate_shifts(recenter(s, est.shifts));
    for (const Vec2& v : fixed.shifts) CHECK(v.norm() < 0.3);
  }

  SUBCASE("empty frame is flagged") {
    const auto est = estimate_shifts(constant_stack(1, 16, 0.1, 0.0));
    CHECK(est.empty[0]);
    CHECK(est.shifts[0] == Vec2::Zero());
  }

  SUBCASE("recenter identities") {
    std::mt19937_64 rng(34);
    FieldStack s = constant_stack(2, 16, 0.1, 0.0);
    for (auto& f : s.frames) fill_random(f, rng);
    const FieldStack same = recenter(s, {Vec2::Zero(), Vec2::Zero()});
    for (int t = 0; t < 2; ++t) CHECK(same.frames[t].data() == s.frames[t].data());

    const FieldStack rolled = recenter(s, {Vec2(2, -1), Vec2::Zero()});
    for (int iy = 0; iy < 16; ++iy)
      for (int ix = 0; ix < 16; ++ix) {
        const int sx = ix + 2, sy = iy - 1;
        const bool in = sx < 16 && sy >= 0;
        CHECK(rolled.frames[0](iy, ix) == (in ? s.frames[0](sy, sx) : Complex{}));
      }
    CHECK_THROWS_AS(recenter(s, {Vec2(std::nan(""), 0), Vec2::Zero()}), Error);
  }
}

TEST_CASE("Rytov data from weak-scattering BPM matches the Born model") {
  MeasurementGeometry g;
  g.n = 32;
  PhantomSpec spec;
  spec.grid = 32;
  spec.semi_axes = Vec3(1.5, 1.3, 1.1);
  spec.n_ellipsoid = 1.335;
  spec.bead_count = 3;
  spec.bead_radius = 0.3;
  spec.n_bead = 1.34;
  const Phantom p = make_phantom(spec);
  // Peak phase shift along x3 stays below 0.3 rad.
  const double peak_phase = g.k0() * (spec.n_bead / g.n0 - 1) * 2 * spec.semi_axes(2);
  REQUIRE(peak_phase <= 0.3);

  const auto traj = constant_rotation(2, Vec3::UnitY(), 0.7);
  const FieldStack total = bpm_stack(p.n, traj, g);
  const FieldStack ryt = rytov_transform(total, estimate_incident(total));
  const FieldStack born = born_stack(n_to_f(p), traj, g);
  CHECK(stack_rel_l2(ryt, born) <= 0.1);
}

TEST_CASE("preprocess chain") {
  const FieldStack s = constant_stack(3, 16, 0.15, std::polar(1.0, 0.4));
  const auto res = preprocess(s);
  CHECK(res.m.count() == 3);
  for (const auto& f : res.m.frames)
    for (const auto& v : f.data()) CHECK(std::abs(v) < 1e-14);
  CHECK(res.shifts.shifts.empty());
}
