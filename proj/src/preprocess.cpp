#include "ccodt/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ccodt {

namespace {

double lower_median(std::vector<double> v) {
  const auto mid = v.begin() + (v.size() - 1) / 2;
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

void check_incident(const FieldStack& stack, const IncidentEstimate& inc) {
  const auto t = static_cast<std::size_t>(stack.count());
  if (inc.phase.size() != t || inc.amplitude.size() != t)
    throw Error("incident estimate does not match the stack length");
}

}  // namespace

IncidentEstimate estimate_incident(const FieldStack& stack) {
  IncidentEstimate inc;
  for (const auto& frame : stack.frames) {
    if (frame.count() == 0) throw Error("empty frame");
    std::vector<double> phase(frame.count()), amp(frame.count());
    for (std::size_t i = 0; i < frame.count(); ++i) {
      phase[i] = std::arg(frame[i]);
      amp[i] = std::abs(frame[i]);
    }
    inc.phase.push_back(lower_median(std::move(phase)));
    inc.amplitude.push_back(lower_median(std::move(amp)));
  }
  return inc;
}

FieldStack born_subtract(const FieldStack& stack, const IncidentEstimate& inc) {
  check_incident(stack, inc);
  FieldStack out = stack;
  for (int t = 0; t < stack.count(); ++t) {
    const Complex u_inc = std::polar(1.0, inc.phase[t]);
    for (auto& v : out.frames[t].data()) v -= u_inc;
  }
  return out;
}

FieldStack rytov_transform(const FieldStack& stack, const IncidentEstimate& inc) {
  check_incident(stack, inc);
  FieldStack out = stack;
  for (int t = 0; t < stack.count(); ++t) {
    if (!(inc.amplitude[t] > 0.0)) throw Error("zero median amplitude in frame " + std::to_string(t));
    const Complex u_inc = std::polar(1.0, inc.phase[t]);
    auto& frame = out.frames[t];
    for (std::size_t i = 0; i < frame.count(); ++i) {
      const double a = std::abs(frame[i]);
      if (!(a > 0.0))
        throw Error("zero amplitude at frame " + std::to_string(t) + ", pixel (" +
                    std::to_string(i / frame.size()) + ", " + std::to_string(i % frame.size()) + ")");
      // remainder() maps to [-pi, pi]; fold -pi onto pi.
      double dphi = std::remainder(std::arg(frame[i]) - inc.phase[t], 2.0 * kPi);
      if (dphi <= -kPi) dphi += 2.0 * kPi;
      frame[i] = u_inc * Complex(std::log(a / inc.amplitude[t]), dphi);
    }
  }
  return out;
}

double cutoff_weight(double r, double r1, double r2) {
  if (!(r1 > 0.0 && r2 > r1)) throw Error("cutoff radii must satisfy 0 < r1 < r2");
  if (r <= r1) return 1.0;
  if (r >= r2) return 0.0;
  const double w = r2 - r1;
  return (r2 - r) * (r2 - r) * (2.0 * r + r2 - 3.0 * r1) / (w * w * w);
}

FieldStack soft_cutoff(const FieldStack& stack, double r1, double r2) {
  cutoff_weight(0.0, r1, r2);
  FieldStack out = stack;
  for (auto& frame : out.frames)
    for (int iy = 0; iy < frame.size(); ++iy)
      for (int ix = 0; ix < frame.size(); ++ix)
        frame(iy, ix) *= cutoff_weight(std::hypot(frame.coord(ix), frame.coord(iy)), r1, r2);
  return out;
}

FieldStack gaussian_smooth_3d(const FieldStack& stack, double sigma) {
  if (!(sigma > 0.0)) throw Error("smoothing sigma must be positive");
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int j = -radius; j <= radius; ++j) sum += kernel[j + radius] = std::exp(-0.5 * j * j / (sigma * sigma));
  for (auto& k : kernel) k /= sum;

  const int frames = stack.count(), n = stack.size();
  auto clamp = [](int i, int hi) { return std::clamp(i, 0, hi - 1); };
  FieldStack a = stack, b = stack;
  // x1
  for (int t = 0; t < frames; ++t)
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        Complex acc{};
        for (int j = -radius; j <= radius; ++j) acc += kernel[j + radius] * a.frames[t](iy, clamp(ix + j, n));
        b.frames[t](iy, ix) = acc;
      }
  // x2
  for (int t = 0; t < frames; ++t)
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        Complex acc{};
        for (int j = -radius; j <= radius; ++j) acc += kernel[j + radius] * b.frames[t](clamp(iy + j, n), ix);
        a.frames[t](iy, ix) = acc;
      }
  // t
  for (int t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < b.frames[t].count(); ++i) {
      Complex acc{};
      for (int j = -radius; j <= radius; ++j) acc += kernel[j + radius] * a.frames[clamp(t + j, frames)][i];
      b.frames[t][i] = acc;
    }
  return b;
}

ShiftEstimate estimate_shifts(const FieldStack& stack, const ShiftOptions& opts) {
  ShiftEstimate out;
  const int n = stack.size();
  for (const auto& frame : stack.frames) {
    RealImage filtered(n, frame.pitch());
    double peak = 0.0;
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        double win[9];
        int count = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int y = std::clamp(iy + dy, 0, n - 1), x = std::clamp(ix + dx, 0, n - 1);
            win[count++] = std::abs(frame(y, x));
          }
        std::nth_element(win, win + 4, win + 9);
        filtered(iy, ix) = win[4];
        peak = std::max(peak, win[4]);
      }

    const double level = opts.threshold * peak;
    auto inside = [&](int iy, int ix) {
      return iy >= 0 && ix >= 0 && iy < n && ix < n && peak > 0.0 && filtered(iy, ix) >= level;
    };
    // Kasa fit: x^2 + y^2 + D x + E y + F = 0 in least squares.
    Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
    Eigen::Vector3d atb = Eigen::Vector3d::Zero();
    int boundary = 0;
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        if (!inside(iy, ix)) continue;
        if (inside(iy - 1, ix) && inside(iy + 1, ix) && inside(iy, ix - 1) && inside(iy, ix + 1)) continue;
        const Eigen::Vector3d row(ix, iy, 1.0);
        ata += row * row.transpose();
        atb += row * -(double(ix) * ix + double(iy) * iy);
        ++boundary;
      }
    Vec2 shift = Vec2::Zero();
    bool empty = boundary < 3;
    if (!empty) {
      const Eigen::Vector3d sol = ata.ldlt().solve(atb);
      if (sol.allFinite())
        shift = Vec2(-0.5 * sol(0) - n / 2, -0.5 * sol(1) - n / 2);
      else
        empty = true;
    }
    out.shifts.push_back(shift);
    out.empty.push_back(empty);
  }
  return out;
}

FieldStack recenter(const FieldStack& stack, const std::vector<Vec2>& shifts) {
  if (shifts.size() != static_cast<std::size_t>(stack.count())) throw Error("one shift per frame required");
  FieldStack out = stack;
  const int n = stack.size();
  for (int t = 0; t < stack.count(); ++t) {
    const Vec2& s = shifts[t];
    if (!s.allFinite()) throw Error("non-finite shift in frame " + std::to_string(t));
    const auto& in = stack.frames[t];
    auto at = [&](int iy, int ix) {
      return (iy < 0 || ix < 0 || iy >= n || ix >= n) ? Complex{} : in(iy, ix);
    };
    auto& frame = out.frames[t];
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        const double x = ix + s(0), y = iy + s(1);
        const double fx = std::floor(x), fy = std::floor(y);
        const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
        const double ax = x - fx, ay = y - fy;
        Complex acc = (1 - ax) * (1 - ay) * at(y0, x0);
        if (ax != 0.0) acc += ax * (1 - ay) * at(y0, x0 + 1);
        if (ay != 0.0) acc += (1 - ax) * ay * at(y0 + 1, x0);
        if (ax != 0.0 && ay != 0.0) acc += ax * ay * at(y0 + 1, x0 + 1);
        frame(iy, ix) = acc;
      }
  }
  return out;
}

PreprocessResult preprocess(const FieldStack& total, const PreprocessOptions& opts) {
  PreprocessResult res;
  res.incident = estimate_incident(total);
  FieldStack m = opts.linearization == Linearization::Rytov ? rytov_transform(total, res.incident)
                                                            : born_subtract(total, res.incident);
  if (opts.recenter) {
    const FieldStack scattered =
        opts.linearization == Linearization::Born ? m : born_subtract(total, res.incident);
    res.shifts = estimate_shifts(scattered, opts.shift);
    m = recenter(m, res.shifts.shifts);
  }
  double r2 = opts.r2, r1 = opts.r1;
  if (r2 <= 0.0) r2 = 0.95 * 0.5 * total.size() * total.pitch();
  if (r1 <= 0.0) r1 = 0.7 * r2;
  m = soft_cutoff(m, r1, r2);
  if (opts.smooth_sigma > 0.0) m = gaussian_smooth_3d(m, opts.smooth_sigma);
  res.m = std::move(m);
  return res;
}

}  // namespace ccodt
