#include "ccodt/motion_direct.hpp"
#include "ccodt/motion_infinitesimal.hpp"
#include "ccodt/optics.hpp"
#include "ccodt/simulate.hpp"

#include "doctest.h"
#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

using namespace ccodt;
using namespace ccodt::testing;

namespace {

EulerAngles random_euler(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return {2 * kPi * u(rng), kPi * u(rng), 2 * kPi * u(rng)};
}

// Synthetic energy grid covering |k| <= k0 with a two-cell margin.
CartesianEnergyGrid synthetic_grid(double k0, double (*fn)(const Vec2&)) {
  const int n = 64;
  const double dk = 2.2 * k0 / n;
  CartesianEnergyGrid g;
  g.k0 = k0;
  g.nu = Grid2<double>(n, dk);
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) g.nu(iy, ix) = fn(Vec2(g.nu.coord(ix), g.nu.coord(iy)));
  return g;
}

double quadratic(const Vec2& k) { return 3.0 - 0.5 * k(0) + 0.25 * k(1) + 0.1 * k(0) * k(1) - 0.02 * k.squaredNorm(); }
double radial(const Vec2& k) { return 50.0 - k.squaredNorm(); }
double radial_shifted(const Vec2& k) { return 52.5 - k.squaredNorm(); }

double mean_error_deg(const RotationTrajectory& a, const RotationTrajectory& b) {
  double e = 0.0;
  for (int t = 0; t < a.size(); ++t) e += distance(a.frames[t], b.frames[t]);
  return deg(e / a.size());
}

struct Scene {
  RotationTrajectory truth;
  FieldStack m;
  std::vector<CartesianEnergyGrid> nu;  // 4x zero-padded
};

const Scene& desk_scene() {
  static const Scene scene = [] {
    Scene s;
    s.truth = constant_rotation(100, Vec3::UnitY(), 2 * kPi / 100);
    s.m = born_stack(n_to_f(make_phantom(PhantomSpec{})), s.truth, MeasurementGeometry{});
    s.nu = nu_cartesian_stack(s.m, 0.99, 4);
    return s;
  }();
  return scene;
}

// |m| is a Gaussian blob circling the frame center with period p frames.
FieldStack periodic_stack(int frames, double period) {
  FieldStack st;
  const int n = 32;
  for (int t = 0; t < frames; ++t) {
    FieldImage f(n, 0.2);
    const double a = 2 * kPi * t / period;
    const double cx = 1.5 * std::cos(a), cy = 1.5 * std::sin(a);
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        const double dx = f.coord(ix) - cx, dy = f.coord(iy) - cy;
        f(iy, ix) = std::polar(std::exp(-(dx * dx + dy * dy) / 0.5), 0.3 * t);
      }
    st.frames.push_back(std::move(f));
  }
  return st;
}

}  // namespace

TEST_CASE("common circle curves") {
  const double k0 = 13.0;
  SUBCASE("both curves start at the origin and stay inside the pupil") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> b(-kPi / 2, kPi / 2);
    for (int i = 0; i < 200; ++i) {
      const EulerAngles e = random_euler(rng);
      CHECK(circle_curve(e.phi, e.theta, 0.0, k0).norm() == doctest::Approx(0.0));
      CHECK(dual_circle_curve(e.phi, e.theta, 0.0, k0).norm() == doctest::Approx(0.0));
      const double beta = b(rng);
      CHECK(circle_curve(e.phi, e.theta, beta, k0).norm() <= k0 + 1e-12);
      CHECK(dual_circle_curve(e.phi, e.theta, beta, k0).norm() <= k0 + 1e-12);
    }
  }
  SUBCASE("pure z rotation: the circle is a diameter") {
    // theta = 0: the curve is k0 sin(beta) (-sin phi, cos phi).
    const Vec2 k = circle_curve(0.3, 0.0, 0.7, k0);
    CHECK(k(0) == doctest::Approx(-k0 * std::sin(0.7) * std::sin(0.3)));
    CHECK(k(1) == doctest::Approx(k0 * std::sin(0.7) * std::cos(0.3)));
    CHECK(dual_circle_curve(0.3, 0.0, 0.7, k0).norm() == doctest::Approx(0.0));
  }
  SUBCASE("lifted points coincide after the relative rotation") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> b(-kPi / 2, kPi / 2);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const EulerAngles e = random_euler(rng);
      const double beta = b(rng);
      const Rotation q = euler_to_rotation(e);
      const Vec3 a = lift(circle_curve(e.phi, e.theta, beta, k0), k0);
      const Vec3 c = q * lift(circle_curve(kPi - e.psi, e.theta, -beta, k0), k0);
      const Vec3 ad = lift(dual_circle_curve(e.phi, e.theta, beta, k0), k0);
      // real f: |F| is even, so the dual pair meets through the point reflection
      const Vec3 cd = -(q * lift(dual_circle_curve(kPi - e.psi, e.theta, beta, k0), k0));
      worst = std::max({worst, (a - c).norm() / k0, (ad - cd).norm() / k0});
    }
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("Keys interpolation of the energy") {
  const double k0 = 10.0;
  const auto grid = synthetic_grid(k0, quadratic);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-k0, k0);
  SUBCASE("reproduces quadratics away from the border") {
    for (int i = 0; i < 200; ++i) {
      const Vec2 k(u(rng), u(rng));
      CHECK(interpolate_nu(grid, k) == doctest::Approx(quadratic(k)).epsilon(1e-12));
    }
  }
  SUBCASE("returns the node values on the grid") {
    CHECK(interpolate_nu(grid, Vec2(grid.nu.coord(40), grid.nu.coord(20))) == doctest::Approx(grid.nu(20, 40)));
  }
  SUBCASE("vanishes far outside the grid") { CHECK(interpolate_nu(grid, Vec2(100.0, 0.0)) == 0.0); }
}

TEST_CASE("pair energy") {
  const double k0 = 10.0;
  std::mt19937_64 rng(11);
  SUBCASE("radial energies agree on every circle pair") {
    const auto g = synthetic_grid(k0, radial);
    for (int i = 0; i < 20; ++i) CHECK(pair_energy(g, g, random_euler(rng)) <= 1e-18);
  }
  SUBCASE("a constant offset c integrates to 2 pi c^2") {
    const auto s = synthetic_grid(k0, radial), t = synthetic_grid(k0, radial_shifted);
    for (int i = 0; i < 5; ++i)
      CHECK(pair_energy(s, t, random_euler(rng)) == doctest::Approx(2 * kPi * 2.5 * 2.5).epsilon(1e-10));
  }
  SUBCASE("regularized energy adds lambda times the distance to the prior") {
    const auto s = synthetic_grid(k0, quadratic), t = synthetic_grid(k0, radial);
    const EulerAngles e{0.4, 1.1, 2.0};
    const Rotation prior = Rotation::about_x(0.3);
    const double base = pair_energy(s, t, e);
    CHECK(regularized_pair_energy(s, t, e, prior, 0.0) == doctest::Approx(base));
    CHECK(regularized_pair_energy(s, t, e, prior, 2.0) ==
          doctest::Approx(base + 2.0 * distance(prior, euler_to_rotation(e))));
    CHECK(regularized_pair_energy(s, t, e, euler_to_rotation(e), 5.0) == doctest::Approx(base));
    CHECK_THROWS_AS(regularized_pair_energy(s, t, e, prior, -1.0), Error);
  }
  SUBCASE("contract violations") {
    const auto g = synthetic_grid(k0, radial);
    auto other = g;
    other.k0 = 9.0;
    CHECK_THROWS_AS(pair_energy(g, other, {}), Error);
    CHECK_THROWS_AS(pair_energy(g, g, {}, 0), Error);
  }
}

TEST_CASE("pair energy on exact Born data") {
  const Scene& sc = desk_scene();
  const int s = 10, t = 25;
  const Rotation truth = sc.truth.frames[s].transpose() * sc.truth.frames[t];
  const EulerAngles e = rotation_to_euler(truth);
  const double at_truth = pair_energy(sc.nu[s], sc.nu[t], e);
  std::mt19937_64 rng(21);
  for (int i = 0; i < 10; ++i) {
    const Rotation off = truth * exp_map(random_vec3(rng).normalized() * rad(20.0));
    CHECK(at_truth < 1e-2 * pair_energy(sc.nu[s], sc.nu[t], rotation_to_euler(off)));
  }
  SUBCASE("minimization started at the truth stays there") {
    const CirclePair p = minimize_pair(sc.nu[s], sc.nu[t], truth, 0.0);
    CHECK(p.converged);
    CHECK(deg(distance(euler_to_rotation(p.euler), truth)) <= 2.0);
  }
  SUBCASE("a dominant prior pins the result") {
    const Rotation prior = truth * Rotation::about_z(rad(8.0));
    const CirclePair p = minimize_pair(sc.nu[s], sc.nu[t], prior, 1e12);
    CHECK(deg(distance(euler_to_rotation(p.euler), prior)) <= 0.1);
  }
}

TEST_CASE("Nelder-Mead") {
  SUBCASE("separable quadratic") {
    auto f = [](const std::vector<double>& x) {
      return std::pow(x[0] - 1.0, 2) + 3.0 * std::pow(x[1] + 0.5, 2) + 0.5 * std::pow(x[2] - 2.0, 2);
    };
    const auto r = nelder_mead(f, {0.0, 0.0, 0.0});
    CHECK(r.converged);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(r.x[1] == doctest::Approx(-0.5).epsilon(1e-3));
    CHECK(r.x[2] == doctest::Approx(2.0).epsilon(1e-3));
    CHECK(r.value == doctest::Approx(f(r.x)));
  }
  SUBCASE("Rosenbrock valley") {
    auto f = [](const std::vector<double>& x) {
      return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
    };
    NelderMeadOptions o;
    o.initial_step = 0.5;
    o.tolerance = 1e-9;
    o.max_evaluations = 5000;
    const auto r = nelder_mead(f, {-1.2, 1.0}, o);
    CHECK(r.converged);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-4));
  }
  SUBCASE("evaluation budget") {
    NelderMeadOptions o;
    o.max_evaluations = 10;
    o.tolerance = 1e-14;
    const auto r = nelder_mead([](const std::vector<double>& x) { return x[0] * x[0] + x[1] * x[1]; }, {3.0, 4.0}, o);
    CHECK_FALSE(r.converged);
    CHECK(r.evaluations <= 10 + 3);
  }
  CHECK_THROWS_AS(nelder_mead([](const std::vector<double>&) { return 0.0; }, {}), Error);
}

TEST_CASE("period estimation") {
  for (double p : {23.0, 46.0, 50.0}) {
    CAPTURE(p);
    const auto est = estimate_period(periodic_stack(static_cast<int>(2.5 * p), p));
    CHECK(std::abs(est.period - p) <= 1.0);
    CHECK(est.correlation[0] == doctest::Approx(1.0));
  }
  SUBCASE("a static stack has no period") {
    FieldStack st = periodic_stack(40, 1e9);
    for (auto& f : st.frames) f = st.frames[0];
    CHECK_THROWS_WITH_AS(estimate_period(st), "no periodicity detected", Error);
  }
  SUBCASE("invalid lag range") {
    PeriodOptions o;
    o.max_lag = 100;
    CHECK_THROWS_AS(estimate_period(periodic_stack(40, 20), o), Error);
  }
}

TEST_CASE("pair schedule") {
  SUBCASE("scaled options") {
    const auto a = scaled_schedule_options(200);
    CHECK(a.stride == 10);
    CHECK(a.offset_min == 20);
    CHECK(a.offset_max == 60);
    const auto b = scaled_schedule_options(100, 2);
    CHECK(b.stride == 5);
    CHECK(b.offset_min == 10);
    CHECK(b.offset_max == 30);
    CHECK(b.passes == 2);
  }
  SUBCASE("unclipped schedule over 200 frames") {
    const auto sch = build_schedule(200, std::numeric_limits<double>::infinity(), scaled_schedule_options(200));
    std::size_t expected = 0;
    for (int s = 0; s < 200; s += 10) expected += std::max(0, std::min(60, 199 - s) - 20 + 1);
    CHECK(sch.pairs.size() == expected);
    CHECK(sch.pairs.front() == std::pair{0, 20});
    CHECK(sch.min_offset == 20);
    CHECK(sch.max_offset == 60);
    for (const auto& [s, t] : sch.pairs) {
      CHECK(s % 10 == 0);
      CHECK(t - s >= 20);
      CHECK(t - s <= 60);
      CHECK(t < 200);
    }
  }
  SUBCASE("the period clips the offsets") {
    const auto sch = build_schedule(200, 100.0, scaled_schedule_options(200));
    CHECK(sch.min_offset == 20);
    CHECK(sch.max_offset == 45);
    const auto small = build_schedule(200, 40.0, ScheduleOptions{1, 10, 1, 60});
    CHECK(small.min_offset == 4);
    CHECK(small.max_offset == 18);
  }
  SUBCASE("failures") {
    CHECK_THROWS_WITH_AS(build_schedule(200, 30.0, scaled_schedule_options(200)), "empty pair schedule", Error);
    CHECK_THROWS_AS(build_schedule(200, 0.0, ScheduleOptions{1, 0, 20, 60}), Error);
    CHECK_THROWS_AS(build_schedule(200, 0.0, ScheduleOptions{1, 10, 30, 20}), Error);
    CHECK_THROWS_AS(scaled_schedule_options(2), Error);
  }
}

TEST_CASE("direct pipeline on exact Born data") {
  const Scene& sc = desk_scene();
  const auto sch = build_schedule(100, std::numeric_limits<double>::infinity(), scaled_schedule_options(100, 1));
  DirectOptions o;
  o.lambda = 0.01;
  static const RotationTrajectory init = infinitesimal_pipeline(sc.m).trajectory;
  static const DirectResult res = direct_pipeline(sc.nu, init, sch, o);
  const double init_err = mean_error_deg(sc.truth, init);
  const double err = mean_error_deg(sc.truth, res.trajectory);
  MESSAGE("initial " << init_err << " deg, refined " << err << " deg");
  CHECK(err <= init_err);
  CHECK(err <= 3.0);
  CHECK(res.pairs.size() == sch.pairs.size());

  SUBCASE("deterministic") {
    const auto again = direct_pipeline(sc.nu, init, sch, o);
    for (int t = 0; t < 100; ++t) CHECK((again.trajectory.frames[t].matrix() - res.trajectory.frames[t].matrix()).norm() == 0.0);
  }
  SUBCASE("covariant under a change of gauge") {
    const Rotation q = Rotation::about_axis(Vec3(1, 2, 3).normalized(), 0.7);
    PairSchedule few = sch;
    few.pairs.resize(12);
    const auto a = direct_pipeline(sc.nu, init, few, o);
    const auto b = direct_pipeline(sc.nu, apply_gauge(q, init), few, o);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) worst = std::max(worst, distance(q * a.trajectory.frames[t], b.trajectory.frames[t]));
    CHECK(worst <= 1e-6);
  }
  SUBCASE("contract violations") {
    std::vector<CartesianEnergyGrid> short_nu(sc.nu.begin(), sc.nu.begin() + 10);
    CHECK_THROWS_AS(direct_pipeline(short_nu, init, sch, o), Error);
    PairSchedule bad = sch;
    bad.pairs = {{3, 3}};
    CHECK_THROWS_AS(direct_pipeline(sc.nu, init, bad, o), Error);
  }
}
