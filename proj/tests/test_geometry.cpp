#include "vid/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace vid;

namespace {

Quat random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Quat(n(rng), n(rng), n(rng), n(rng)).normalized();
}

}  // namespace

TEST(Geometry, ZeroRateKeepsIdentity) {
  const Quat q = quat_integrate(Quat::Identity(), Vec3::Zero(), 0.01);
  EXPECT_NEAR(rot_error_angle(q, Quat::Identity()), 0.0, 1e-12);
}

TEST(Geometry, YawPiInThousandSteps) {
  Quat q = Quat::Identity();
  for (int i = 0; i < 1000; ++i) q = quat_integrate(q, Vec3(0, 0, M_PI), 1e-3);
  const Quat ref(Eigen::AngleAxisd(M_PI, Vec3::UnitZ()));
  EXPECT_LT(rot_error_angle(q, ref), 1e-3);
}

TEST(Geometry, IntegrateKeepsUnitNorm) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Quat q = quat_integrate(random_unit(rng), Vec3(0.1, -0.2, 0.3), 0.002);
    EXPECT_NEAR(q.norm(), 1.0, 1e-9);
  }
  Quat q = random_unit(rng);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int i = 0; i < 100000; ++i) q = quat_integrate(q, Vec3(n(rng), n(rng), n(rng)), 0.0025);
  EXPECT_NEAR(q.norm(), 1.0, 1e-9);
}

TEST(Geometry, IntegrateRejectsBadInput) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(quat_integrate(Quat::Identity(), Vec3(nan, 0, 0), 0.01), std::invalid_argument);
  EXPECT_THROW(quat_integrate(Quat::Identity(), Vec3::Zero(), nan), std::invalid_argument);
  EXPECT_THROW(quat_integrate(Quat::Identity(), Vec3::Zero(), 0.0), std::invalid_argument);
  EXPECT_THROW(quat_integrate(Quat::Identity(), Vec3::Zero(), 0.1), std::invalid_argument);
}

TEST(Geometry, QuatToRotExamples) {
  EXPECT_TRUE(quat_to_rot(Quat::Identity()).isApprox(Mat3::Identity(), 1e-15));
  const Quat qz(std::cos(M_PI / 4), 0, 0, std::sin(M_PI / 4));
  EXPECT_NEAR(quat_to_rot(qz)(0, 1), -1.0, 1e-12);
  EXPECT_NEAR(quat_to_rot(qz)(1, 0), 1.0, 1e-12);
  EXPECT_THROW(quat_to_rot(Quat(1.1, 0, 0, 0)), std::invalid_argument);
}

TEST(Geometry, RotationIsOrthonormal) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const Mat3 R = quat_to_rot(random_unit(rng));
    EXPECT_LT((R * R.transpose() - Mat3::Identity()).norm(), 1e-9);
    EXPECT_NEAR(R.determinant(), 1.0, 1e-9);
  }
}

TEST(Geometry, RotErrorAngle) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 50; ++i) {
    const Quat q = random_unit(rng);
    const Mat3 R = quat_to_rot(q);
    EXPECT_NEAR(rot_error_angle(R, R), 0.0, 1e-6);
    const double a = 0.1 + 3.0 * i / 50.0;
    const Mat3 R2 = R * so3_exp(Vec3(0, a, 0));
    EXPECT_NEAR(rot_error_angle(R, R2), a, 1e-6);
    EXPECT_NEAR(rot_error_angle(q, Quat(R2)), a, 1e-6);
  }
}

TEST(Geometry, CompositionMatchesMatrixProduct) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    const Quat a = random_unit(rng), b = random_unit(rng);
    EXPECT_LT((quat_to_rot((a * b).normalized()) - quat_to_rot(a) * quat_to_rot(b)).norm(), 1e-9);
  }
}

TEST(Geometry, ForwardBackwardReturnsToStartSecondOrder) {
  std::mt19937_64 rng(8);
  const Vec3 w(0.7, -1.1, 0.4);
  double prev = 0.0;
  for (double dt : {0.02, 0.01, 0.005}) {
    const Quat q0 = Quat::Identity();
    const Quat q = quat_integrate(quat_integrate(q0, w, dt), -w, dt);
    const double err = rot_error_angle(q, q0);
    EXPECT_LT(err, 2.0 * dt * dt * w.squaredNorm());
    if (prev > 0.0) EXPECT_LT(err, prev);
    prev = err;
  }
  (void)rng;
}

TEST(Geometry, ExpLogRoundTrip) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const Vec3 phi(n(rng), n(rng), n(rng));
    if (phi.norm() > 3.0) continue;
    EXPECT_LT((so3_log(so3_exp(phi)) - phi).norm(), 1e-9);
    EXPECT_LT((quat_log(quat_exp(phi)) - phi).norm(), 1e-9);
  }
}

TEST(Geometry, RightJacobianInverse) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const Vec3 phi(n(rng), n(rng), n(rng));
    EXPECT_LT((right_jacobian(phi) * right_jacobian_inv(phi) - Mat3::Identity()).norm(), 1e-9);
    // Exp(phi + d) ~ Exp(phi) Exp(Jr d)
    const Vec3 d = 1e-6 * Vec3(n(rng), n(rng), n(rng));
    const Mat3 lhs = so3_exp(phi + d);
    const Mat3 rhs = so3_exp(phi) * so3_exp(right_jacobian(phi) * d);
    EXPECT_LT((lhs - rhs).norm(), 1e-10);
  }
}

TEST(Geometry, TickRotationMatchesIntegrate) {
  const Vec3 w(0.3, -0.5, 2.0);
  const double dt = 0.01;
  const TickRotation tr = tick_rotation(w * dt);
  const Quat q = quat_integrate(Quat::Identity(), w, dt);
  EXPECT_NEAR(rot_error_angle(tr.dq, q), 0.0, 1e-7);
  // derivative of the tangent increment with respect to x
  const Vec3 x = w * dt;
  for (int c = 0; c < 3; ++c) {
    Vec3 h = Vec3::Zero();
    h(c) = 1e-6;
    const Vec3 num = (so3_log(tr.dR.transpose() * tick_rotation(x + h).dR) -
                      so3_log(tr.dR.transpose() * tick_rotation(x - h).dR)) /
                     2e-6;
    EXPECT_LT((num - tr.dtheta_dx.col(c)).norm(), 1e-7);
  }
}
