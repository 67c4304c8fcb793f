#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vid {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;
using Mat3 = Eigen::Matrix3d;
// Hamilton convention, scalar-first in constructors (w, x, y, z).
using Quat = Eigen::Quaterniond;

// World gravity, z up.
inline const Vec3 kGravity{0.0, 0.0, -9.79};
inline constexpr double kGravityNorm = 9.79;

inline bool all_finite(const Vec3& v) { return v.allFinite(); }
inline bool all_finite(const Quat& q) { return q.coeffs().allFinite(); }

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

inline Mat3 so3_exp(const Vec3& phi) {
  const double theta = phi.norm();
  if (theta < 1e-10) return Mat3::Identity() + skew(phi);
  return Eigen::AngleAxisd(theta, phi / theta).toRotationMatrix();
}

inline Quat quat_exp(const Vec3& phi) {
  const double theta = phi.norm();
  if (theta < 1e-10) {
    Quat q(1.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
    return q.normalized();
  }
  return Quat(Eigen::AngleAxisd(theta, phi / theta));
}

inline Vec3 so3_log(const Mat3& R) {
  Eigen::AngleAxisd aa(R);
  double angle = aa.angle();
  if (angle > M_PI) angle -= 2.0 * M_PI;
  return aa.axis() * angle;
}

inline Vec3 quat_log(const Quat& q) {
  Quat qn = q.w() < 0.0 ? Quat(-q.w(), -q.x(), -q.y(), -q.z()) : q;
  const Vec3 v = qn.vec();
  const double s = v.norm();
  if (s < 1e-12) return 2.0 * v;
  const double angle = 2.0 * std::atan2(s, qn.w());
  return v / s * angle;
}

// SO(3) right Jacobian: Exp(phi + d) ~= Exp(phi) Exp(Jr(phi) d).
inline Mat3 right_jacobian(const Vec3& phi) {
  const double t = phi.norm();
  const Mat3 K = skew(phi);
  if (t < 1e-6) return Mat3::Identity() - 0.5 * K + K * K / 6.0;
  const double t2 = t * t;
  return Mat3::Identity() - (1.0 - std::cos(t)) / t2 * K +
         (t - std::sin(t)) / (t2 * t) * K * K;
}

inline Mat3 right_jacobian_inv(const Vec3& phi) {
  const double t = phi.norm();
  const Mat3 K = skew(phi);
  if (t < 1e-6) return Mat3::Identity() + 0.5 * K + K * K / 12.0;
  const double t2 = t * t;
  return Mat3::Identity() + 0.5 * K +
         (1.0 / t2 - (1.0 + std::cos(t)) / (2.0 * t * std::sin(t))) * K * K;
}

/// Rotation increment of one integration tick: normalize([1, x/2]) with
/// x = omega * dt. This is Exp(phi(x)) with phi = 2 atan(|x|/2) x/|x|.
struct TickRotation {
  Quat dq;
  Mat3 dR;
  /// d(tangent perturbation of dR) / dx, i.e. Jr(phi) * dphi/dx.
  Mat3 dtheta_dx;
};

inline TickRotation tick_rotation(const Vec3& x) {
  TickRotation out;
  out.dq = Quat(1.0, 0.5 * x.x(), 0.5 * x.y(), 0.5 * x.z()).normalized();
  out.dR = out.dq.toRotationMatrix();
  const double s = x.norm();
  Mat3 dphi;
  Vec3 phi;
  if (s < 1e-8) {
    dphi = Mat3::Identity();
    phi = x;
  } else {
    const Vec3 u = x / s;
    const double g = 2.0 * std::atan(0.5 * s);
    const double gp = 1.0 / (1.0 + 0.25 * s * s);
    dphi = (g / s) * (Mat3::Identity() - u * u.transpose()) + gp * u * u.transpose();
    phi = g * u;
  }
  out.dtheta_dx = right_jacobian(phi) * dphi;
  return out;
}

/// Advances q by body rate omega over dt with the first-order quaternion
/// update q <- q * [1, omega dt / 2], renormalized.
inline Quat quat_integrate(const Quat& q, const Vec3& omega, double dt) {
  if (!all_finite(q) || !all_finite(omega) || !std::isfinite(dt))
    throw std::invalid_argument("quat_integrate: non-finite input");
  if (!(dt > 0.0) || !(dt < 0.1))
    throw std::invalid_argument("quat_integrate: dt must lie in (0, 0.1)");
  const Vec3 x = omega * dt;
  Quat out = q * Quat(1.0, 0.5 * x.x(), 0.5 * x.y(), 0.5 * x.z());
  out.normalize();
  return out;
}

inline Mat3 quat_to_rot(const Quat& q) {
  if (std::abs(q.norm() - 1.0) > 1e-6)
    throw std::invalid_argument("quat_to_rot: quaternion is not normalized");
  return q.toRotationMatrix();
}

/// Geodesic angle between two rotations, in [0, pi].
inline double rot_error_angle(const Mat3& Ra, const Mat3& Rb) {
  const double c = std::clamp(0.5 * ((Ra.transpose() * Rb).trace() - 1.0), -1.0, 1.0);
  return std::acos(c);
}

inline double rot_error_angle(const Quat& a, const Quat& b) {
  const double d = std::clamp(std::abs(a.normalized().dot(b.normalized())), 0.0, 1.0);
  return 2.0 * std::acos(d);
}

}  // namespace vid
