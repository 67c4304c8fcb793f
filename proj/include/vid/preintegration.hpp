#pragma once

#include "vid/types.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <vector>

namespace vid {

using Mat15 = Eigen::Matrix<double, 15, 15>;
using Mat18 = Eigen::Matrix<double, 18, 18>;

/// IMU tick with the zero-order-held thrust of the latest rotor sample.
struct FusedSample {
  double t = 0.0;
  Vec3 accel = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();
  Vec3 thrust = Vec3::Zero();  // mass-normalized, body z
};

/// Mass-normalized collective thrust sum(tau_i w_i^2) / m along body z.
Vec3 thrust_from_rotor(const Vec4& omega_rotor, const Vec4& thrust_coeffs, double mass);

/// One fused sample per IMU tick. IMU ticks before the first rotor sample
/// hold the first rotor sample.
std::vector<FusedSample> fuse_streams(const std::vector<ImuSample>& imu,
                                      const std::vector<RotorSpeedSample>& rotor,
                                      const Vec4& thrust_coeffs, double mass);

/// Measurement knots covering [t0, t1]: interpolated values at both ends
/// (accel/gyro linear, thrust held) and every sample strictly inside.
std::vector<FusedSample> interval_knots(const std::vector<FusedSample>& samples, double t0,
                                        double t1);

/// Thrust / external-force preintegration between two keyframes.
///
/// Internally an 18-dim error state [da, db, dF, dba, dbw, dtheta] is
/// propagated; P() and J() report the leading 15x15 block over
/// [da, db, dF, dba, dbw]. Each tick integrates the sample at its start.
class DynPreintegration {
 public:
  static constexpr int kAlpha = 0, kBeta = 3, kForce = 6, kBa = 9, kBw = 12, kTheta = 15;

  DynPreintegration() = default;
  DynPreintegration(const Vec3& lin_ba, const Vec3& lin_bw, const NoiseConfig& noise);

  /// Mean propagation over one tick.
  void propagate(const FusedSample& s, double dt);
  /// Covariance and Jacobian propagation over one tick; uses the current
  /// (pre-tick) rotation, so call before propagate() for the same tick.
  void propagate_covariance(const FusedSample& s, double dt);
  void integrate(const FusedSample& s, double dt) {
    propagate_covariance(s, dt);
    propagate(s, dt);
  }
  void finalize();

  /// Rebuilds the block from the stored knots with new linearization biases.
  void repropagate(const Vec3& lin_ba, const Vec3& lin_bw);

  const Vec3& alpha() const { return alpha_; }
  const Vec3& beta() const { return beta_; }
  const Vec3& fsum() const { return fsum_; }
  const Vec3& favg() const { return favg_; }
  const Quat& gamma() const { return gamma_; }
  double dt_total() const { return dt_total_; }
  bool finalized() const { return finalized_; }
  const Vec3& lin_ba() const { return lin_ba_; }
  const Vec3& lin_bw() const { return lin_bw_; }
  const NoiseConfig& noise() const { return noise_; }
  Mat15 P() const { return P_.topLeftCorner<15, 15>(); }
  Mat15 J() const { return J_.topLeftCorner<15, 15>(); }
  const Mat18& P_full() const { return P_; }
  const Mat18& J_full() const { return J_; }
  const std::vector<FusedSample>& knots() const { return knots_; }

  /// Builds a finalized block from knots (see interval_knots()).
  static DynPreintegration from_knots(const std::vector<FusedSample>& knots, const Vec3& lin_ba,
                                      const Vec3& lin_bw, const NoiseConfig& noise);

 private:
  void check_tick(const FusedSample& s, double dt) const;

  Vec3 alpha_ = Vec3::Zero();
  Vec3 beta_ = Vec3::Zero();
  Vec3 fsum_ = Vec3::Zero();
  Vec3 favg_ = Vec3::Zero();
  Quat gamma_ = Quat::Identity();
  double dt_total_ = 0.0;
  bool finalized_ = false;
  Vec3 lin_ba_ = Vec3::Zero();
  Vec3 lin_bw_ = Vec3::Zero();
  NoiseConfig noise_;
  Mat18 P_ = Mat18::Zero();
  Mat18 J_ = Mat18::Identity();
  std::vector<FusedSample> knots_;
};

DynPreintegration dyn_propagate(DynPreintegration block, const FusedSample& s, double dt);
DynPreintegration dyn_propagate_covariance(DynPreintegration block, const FusedSample& s,
                                           double dt);
DynPreintegration dyn_finalize(DynPreintegration block);

struct CorrectedDyn {
  Vec3 alpha;
  Vec3 beta;
  Vec3 favg;
};

/// First-order bias correction of a finalized block. The force rows of J are
/// already scaled to the averaged force.
CorrectedDyn dyn_correct_bias(const DynPreintegration& block, const Vec3& ba_new,
                              const Vec3& bw_new);

nlohmann::json to_json(const DynPreintegration& block);

/// Standard inertial preintegration with mid-point integration.
/// Error state order [dp, dv, dtheta, dba, dbw].
class ImuPreintegration {
 public:
  static constexpr int kP = 0, kV = 3, kTheta = 6, kBa = 9, kBw = 12;

  ImuPreintegration() = default;
  ImuPreintegration(const Vec3& lin_ba, const Vec3& lin_bw, const NoiseConfig& noise);

  void integrate(const FusedSample& s0, const FusedSample& s1, double dt);
  void repropagate(const Vec3& lin_ba, const Vec3& lin_bw);

  struct Corrected {
    Vec3 dp;
    Vec3 dv;
    Quat dq;
  };
  Corrected correct(const Vec3& ba, const Vec3& bw) const;

  const Vec3& dp() const { return dp_; }
  const Vec3& dv() const { return dv_; }
  const Quat& dq() const { return dq_; }
  double dt_total() const { return dt_total_; }
  const Mat15& P() const { return P_; }
  const Mat15& J() const { return J_; }
  const Vec3& lin_ba() const { return lin_ba_; }
  const Vec3& lin_bw() const { return lin_bw_; }
  const std::vector<FusedSample>& knots() const { return knots_; }

  static ImuPreintegration from_knots(const std::vector<FusedSample>& knots, const Vec3& lin_ba,
                                      const Vec3& lin_bw, const NoiseConfig& noise);

 private:
  Vec3 dp_ = Vec3::Zero();
  Vec3 dv_ = Vec3::Zero();
  Quat dq_ = Quat::Identity();
  double dt_total_ = 0.0;
  Vec3 lin_ba_ = Vec3::Zero();
  Vec3 lin_bw_ = Vec3::Zero();
  NoiseConfig noise_;
  Mat15 P_ = Mat15::Zero();
  Mat15 J_ = Mat15::Identity();
  std::vector<FusedSample> knots_;
};

/// Inertial preintegration over knots; throws on an empty interval.
ImuPreintegration imu_preintegrate(const std::vector<FusedSample>& knots, const Vec3& lin_ba,
                                   const Vec3& lin_bw, const NoiseConfig& noise);

}  // namespace vid
