#pragma once

#include "ccodt/types.hpp"

#include <span>
#include <vector>

namespace ccodt {

/// Element of SO(3). Constructed either from trusted algebra (products,
/// exponentials) or through `from_matrix`, which checks orthogonality.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  /// Validates R^T R = I and det R = 1 to the given Frobenius tolerance.
  static Rotation from_matrix(const Mat3& m, double tol = 1e-9);
  static Rotation unchecked(const Mat3& m) { return Rotation(m); }

  static Rotation identity() { return Rotation(); }
  /// Q^(2)(a): rotation about the x2 axis.
  static Rotation about_y(double angle);
  /// Q^(3)(a): rotation about the x3 axis.
  static Rotation about_z(double angle);
  static Rotation about_x(double angle);
  static Rotation about_axis(const Vec3& axis, double angle);

  const Mat3& matrix() const { return m_; }
  Rotation transpose() const { return Rotation(m_.transpose()); }

  Rotation operator*(const Rotation& other) const { return Rotation(m_ * other.m_); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

  /// Frobenius deviation from orthogonality and unit determinant.
  double orthogonality_defect() const;

 private:
  explicit Rotation(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

/// Z-Y-Z Euler angles, R = Q3(phi) Q2(theta) Q3(psi).
struct EulerAngles {
  double phi = 0.0;    // [0, 2pi)
  double theta = 0.0;  // [0, pi]
  double psi = 0.0;    // [0, 2pi)
};

/// Unit quaternion with the antipodal representative fixed by q0 >= 0.
struct Quaternion {
  double q0 = 1.0, q1 = 0.0, q2 = 0.0, q3 = 0.0;
};

/// Angular velocity omega = (rho cos phi, rho sin phi, zeta), phi in [0, pi).
struct CylindricalVelocity {
  double rho = 0.0;
  double phi = 0.0;
  double zeta = 0.0;
};

struct RotationTrajectory {
  std::vector<Rotation> frames;
  std::vector<Vec3> translations;  // empty, or one per frame

  int size() const { return static_cast<int>(frames.size()); }
  bool has_translations() const { return !translations.empty(); }
};

double angle_of(const Rotation& q);
double distance(const Rotation& r, const Rotation& q);

Rotation euler_to_rotation(const EulerAngles& e);
/// Inverse of euler_to_rotation. At gimbal lock (theta within 1e-8 of 0 or
/// pi) psi is set to 0 and the whole z-rotation is carried by phi.
EulerAngles rotation_to_euler(const Rotation& r);
/// Maps arbitrary real angles onto the canonical ranges without changing the
/// rotation they describe.
EulerAngles wrap_euler(const EulerAngles& e);

Mat3 skew(const Vec3& omega);

/// Nearest rotation in Frobenius norm, U V^T from the SVD A = U S V^T.
Rotation polar_project(const Mat3& a);

Rotation exp_map(const Vec3& rotation_vector);
/// Rotation vector (axis * angle) with angle in [0, pi].
Vec3 log_map(const Rotation& r);

/// Projected forward Euler on SO(3) with unit time step:
/// R_{t+1} = Polar(R_t + R_t W_t). Output has omega.size() frames.
RotationTrajectory integrate_trajectory(std::span<const Vec3> omega, const Rotation& r0);

/// Geodesic interpolation Ra exp(tau log(Ra^T Rb)).
Rotation slerp(const Rotation& ra, const Rotation& rb, double tau);

/// Centered moving average of matrix entries (window shrinks at the ends)
/// followed by polar projection. Translations are averaged the same way.
RotationTrajectory mean_filter(const RotationTrajectory& traj, int window = 5);

Quaternion to_quaternion(const Rotation& r);
Rotation from_quaternion(const Quaternion& q);

CylindricalVelocity to_cylindrical(const Vec3& omega);
Vec3 from_cylindrical(const CylindricalVelocity& c);

/// Left-multiplies every frame by q (a change of gauge).
RotationTrajectory apply_gauge(const Rotation& q, const RotationTrajectory& traj);

}  // namespace ccodt
