#include "ccodt/so3.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace ccodt {

namespace {

double wrap_two_pi(double a) {
  double w = std::fmod(a, 2.0 * kPi);
  if (w < 0.0) w += 2.0 * kPi;
  if (w >= 2.0 * kPi) w = 0.0;
  return w;
}

}  // namespace

Rotation Rotation::from_matrix(const Mat3& m, double tol) {
  Rotation r(m);
  if (!(r.orthogonality_defect() <= tol)) throw Error("matrix is not a rotation");
  return r;
}

Rotation Rotation::about_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return Rotation(m);
}

Rotation Rotation::about_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return Rotation(m);
}

Rotation Rotation::about_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return Rotation(m);
}

Rotation Rotation::about_axis(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n == 0.0) return Rotation();
  return exp_map(axis / n * angle);
}

double Rotation::orthogonality_defect() const {
  const double orth = (m_.transpose() * m_ - Mat3::Identity()).norm();
  return std::max(orth, std::abs(m_.determinant() - 1.0));
}

// atan2 of the axial vector norm and the trace term stays accurate near 0
// and pi, where acos loses half the digits.
double angle_of(const Rotation& q) {
  const Mat3& m = q.matrix();
  const Vec3 axial(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
  return std::atan2(0.5 * axial.norm(), 0.5 * (m.trace() - 1.0));
}

// Chordal form on the unit quaternions: exact zero for equal inputs and no
// cancellation for small angles.
double distance(const Rotation& r, const Rotation& q) {
  const Quaternion a = to_quaternion(r), b = to_quaternion(q);
  const double s = a.q0 * b.q0 + a.q1 * b.q1 + a.q2 * b.q2 + a.q3 * b.q3 < 0.0 ? -1.0 : 1.0;
  const Eigen::Vector4d va(a.q0, a.q1, a.q2, a.q3), vb(s * b.q0, s * b.q1, s * b.q2, s * b.q3);
  return 4.0 * std::atan2((va - vb).norm(), (va + vb).norm());
}

Rotation euler_to_rotation(const EulerAngles& e) {
  return Rotation::about_z(e.phi) * Rotation::about_y(e.theta) * Rotation::about_z(e.psi);
}

EulerAngles rotation_to_euler(const Rotation& r) {
  const Mat3& m = r.matrix();
  EulerAngles e;
  const double st = std::hypot(m(0, 2), m(1, 2));
  e.theta = std::atan2(st, m(2, 2));
  constexpr double kLock = 1e-8;
  if (e.theta < kLock) {
    e.theta = 0.0;
    e.phi = wrap_two_pi(std::atan2(m(1, 0), m(0, 0)));
    e.psi = 0.0;
  } else if (kPi - e.theta < kLock) {
    e.theta = kPi;
    e.phi = wrap_two_pi(std::atan2(-m(0, 1), m(1, 1)));
    e.psi = 0.0;
  } else {
    e.phi = wrap_two_pi(std::atan2(m(1, 2), m(0, 2)));
    e.psi = wrap_two_pi(std::atan2(m(2, 1), -m(2, 0)));
  }
  return e;
}

EulerAngles wrap_euler(const EulerAngles& e) {
  // Q2(-theta) = Q3(pi) Q2(theta) Q3(pi) moves theta back into [0, pi].
  double theta = std::fmod(e.theta, 2.0 * kPi);
  if (theta < 0.0) theta += 2.0 * kPi;
  double phi = e.phi, psi = e.psi;
  if (theta > kPi) {
    theta = 2.0 * kPi - theta;
    phi += kPi;
    psi += kPi;
  }
  return {wrap_two_pi(phi), theta, wrap_two_pi(psi)};
}

Mat3 skew(const Vec3& w) {
  Mat3 m;
  m << 0, -w(2), w(1), w(2), 0, -w(0), -w(1), w(0), 0;
  return m;
}

Rotation polar_project(const Mat3& a) {
  Eigen::JacobiSVD<Mat3> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (!std::isfinite(s(0)) || s(2) <= 1e-12 * std::max(s(0), 1e-300)) {
    throw Error("degenerate polar projection");
  }
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) = -u.col(2);
  return Rotation::unchecked(u * v.transpose());
}

Rotation exp_map(const Vec3& w) {
  const double angle = w.norm();
  const Mat3 k = skew(w);
  double a, b;  // sin(x)/x, (1-cos x)/x^2
  if (angle < 1e-6) {
    const double x2 = angle * angle;
    a = 1.0 - x2 / 6.0;
    b = 0.5 - x2 / 24.0;
  } else {
    a = std::sin(angle) / angle;
    b = (1.0 - std::cos(angle)) / (angle * angle);
  }
  return Rotation::unchecked(Mat3::Identity() + a * k + b * k * k);
}

Vec3 log_map(const Rotation& r) {
  const Quaternion q = to_quaternion(r);
  const Vec3 v(q.q1, q.q2, q.q3);
  const double s = v.norm();
  if (s < 1e-300) return Vec3::Zero();
  const double angle = 2.0 * std::atan2(s, q.q0);
  return v / s * angle;
}

RotationTrajectory integrate_trajectory(std::span<const Vec3> omega, const Rotation& r0) {
  RotationTrajectory out;
  if (omega.empty()) return out;
  out.frames.reserve(omega.size());
  out.frames.push_back(r0);
  for (std::size_t t = 0; t + 1 < omega.size(); ++t) {
    const Mat3& r = out.frames.back().matrix();
    out.frames.push_back(polar_project(r + r * skew(omega[t])));
  }
  return out;
}

Rotation slerp(const Rotation& ra, const Rotation& rb, double tau) {
  const Rotation rel = ra.transpose() * rb;
  if (kPi - angle_of(rel) < 1e-9) throw Error("antipodal interpolation");
  return ra * exp_map(tau * log_map(rel));
}

RotationTrajectory mean_filter(const RotationTrajectory& traj, int window) {
  if (window < 1 || window % 2 == 0) throw Error("mean filter window must be odd and positive");
  const int n = traj.size();
  const int half = window / 2;
  RotationTrajectory out;
  out.frames.reserve(n);
  if (traj.has_translations()) out.translations.resize(n);
  for (int t = 0; t < n; ++t) {
    const int lo = std::max(0, t - half);
    const int hi = std::min(n - 1, t + half);
    Mat3 acc = Mat3::Zero();
    Vec3 shift = Vec3::Zero();
    for (int s = lo; s <= hi; ++s) {
      acc += traj.frames[s].matrix();
      if (traj.has_translations()) shift += traj.translations[s];
    }
    const double count = hi - lo + 1;
    out.frames.push_back(window == 1 ? traj.frames[t] : polar_project(acc / count));
    if (traj.has_translations()) out.translations[t] = shift / count;
  }
  return out;
}

Quaternion to_quaternion(const Rotation& r) {
  const Mat3& m = r.matrix();
  const double tr = m.trace();
  double q[4];
  // Shepperd: branch on the largest diagonal term for stability.
  if (tr >= m(0, 0) && tr >= m(1, 1) && tr >= m(2, 2)) {
    const double s = std::sqrt(1.0 + tr) * 2.0;
    q[0] = 0.25 * s;
    q[1] = (m(2, 1) - m(1, 2)) / s;
    q[2] = (m(0, 2) - m(2, 0)) / s;
    q[3] = (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) >= m(1, 1) && m(0, 0) >= m(2, 2)) {
    const double s = std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2)) * 2.0;
    q[0] = (m(2, 1) - m(1, 2)) / s;
    q[1] = 0.25 * s;
    q[2] = (m(0, 1) + m(1, 0)) / s;
    q[3] = (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) >= m(2, 2)) {
    const double s = std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2)) * 2.0;
    q[0] = (m(0, 2) - m(2, 0)) / s;
    q[1] = (m(0, 1) + m(1, 0)) / s;
    q[2] = 0.25 * s;
    q[3] = (m(1, 2) + m(2, 1)) / s;
  } else {
    const double s = std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1)) * 2.0;
    q[0] = (m(1, 0) - m(0, 1)) / s;
    q[1] = (m(0, 2) + m(2, 0)) / s;
    q[2] = (m(1, 2) + m(2, 1)) / s;
    q[3] = 0.25 * s;
  }
  const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  for (double& c : q) c /= norm;
  // Fix the antipodal representative: first nonzero component positive.
  for (double c : q) {
    if (c > 0.0) break;
    if (c < 0.0) {
      for (double& d : q) d = -d;
      break;
    }
  }
  return {q[0], q[1], q[2], q[3]};
}

Rotation from_quaternion(const Quaternion& qin) {
  const double n = std::sqrt(qin.q0 * qin.q0 + qin.q1 * qin.q1 + qin.q2 * qin.q2 + qin.q3 * qin.q3);
  if (!(n > 0.0)) throw Error("zero quaternion");
  const double w = qin.q0 / n, x = qin.q1 / n, y = qin.q2 / n, z = qin.q3 / n;
  Mat3 m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return Rotation::unchecked(m);
}

CylindricalVelocity to_cylindrical(const Vec3& w) {
  CylindricalVelocity c;
  c.rho = std::hypot(w(0), w(1));
  c.zeta = w(2);
  if (c.rho == 0.0) return c;
  double phi = std::atan2(w(1), w(0));
  if (phi < 0.0) {
    phi += kPi;
    c.rho = -c.rho;
  }
  if (phi >= kPi) {
    phi -= kPi;
    c.rho = -c.rho;
  }
  c.phi = phi;
  return c;
}

Vec3 from_cylindrical(const CylindricalVelocity& c) {
  return {c.rho * std::cos(c.phi), c.rho * std::sin(c.phi), c.zeta};
}

RotationTrajectory apply_gauge(const Rotation& q, const RotationTrajectory& traj) {
  RotationTrajectory out = traj;
  for (auto& r : out.frames) r = q * r;
  return out;
}

}  // namespace ccodt
