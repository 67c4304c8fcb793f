#include "vid/preintegration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vid {

namespace {

constexpr double kTimeEps = 1e-9;

FusedSample interpolate(const std::vector<FusedSample>& s, double t) {
  auto it = std::upper_bound(s.begin(), s.end(), t,
                             [](double v, const FusedSample& x) { return v < x.t; });
  if (it == s.begin()) return FusedSample{t, s.front().accel, s.front().gyro, s.front().thrust};
  const auto& a = *(it - 1);
  if (it == s.end() || std::abs(a.t - t) < kTimeEps) return FusedSample{t, a.accel, a.gyro, a.thrust};
  const auto& b = *it;
  const double w = (t - a.t) / (b.t - a.t);
  return FusedSample{t, (1.0 - w) * a.accel + w * b.accel, (1.0 - w) * a.gyro + w * b.gyro,
                     a.thrust};
}

}  // namespace

Vec3 thrust_from_rotor(const Vec4& omega_rotor, const Vec4& thrust_coeffs, double mass) {
  const double f = thrust_coeffs.dot(omega_rotor.cwiseAbs2());
  return Vec3(0.0, 0.0, f / mass);
}

std::vector<FusedSample> fuse_streams(const std::vector<ImuSample>& imu,
                                      const std::vector<RotorSpeedSample>& rotor,
                                      const Vec4& thrust_coeffs, double mass) {
  std::vector<FusedSample> out;
  if (imu.empty()) return out;
  if (rotor.empty()) throw std::invalid_argument("fuse_streams: rotor stream is empty");
  if (!(mass > 0.0)) throw std::invalid_argument("fuse_streams: mass must be positive");
  out.reserve(imu.size());
  std::size_t j = 0;
  for (const auto& m : imu) {
    while (j + 1 < rotor.size() && rotor[j + 1].t <= m.t + kTimeEps) ++j;
    out.push_back({m.t, m.accel, m.gyro, thrust_from_rotor(rotor[j].omega_rotor, thrust_coeffs, mass)});
  }
  return out;
}

std::vector<FusedSample> interval_knots(const std::vector<FusedSample>& samples, double t0,
                                        double t1) {
  if (!(t1 > t0)) throw std::invalid_argument("interval_knots: empty interval");
  if (samples.empty() || samples.front().t > t0 + 1e-6 || samples.back().t < t1 - 1e-6)
    throw std::invalid_argument("interval_knots: samples do not cover the interval");
  std::vector<FusedSample> knots;
  knots.push_back(interpolate(samples, t0));
  auto it = std::upper_bound(samples.begin(), samples.end(), t0 + kTimeEps,
                             [](double v, const FusedSample& x) { return v < x.t; });
  for (; it != samples.end() && it->t < t1 - kTimeEps; ++it) knots.push_back(*it);
  knots.push_back(interpolate(samples, t1));
  return knots;
}

// ---------------------------------------------------------------------------
// DynPreintegration

DynPreintegration::DynPreintegration(const Vec3& lin_ba, const Vec3& lin_bw,
                                     const NoiseConfig& noise)
    : lin_ba_(lin_ba), lin_bw_(lin_bw), noise_(noise) {}

void DynPreintegration::check_tick(const FusedSample& s, double dt) const {
  if (finalized_) throw std::logic_error("dyn_propagate: block already finalized");
  if (!(dt > 0.0) || !(dt < 0.1)) throw std::invalid_argument("dyn_propagate: dt must lie in (0, 0.1)");
  if (!s.accel.allFinite() || !s.gyro.allFinite() || !s.thrust.allFinite())
    throw std::invalid_argument("dyn_propagate: non-finite sample");
}

void DynPreintegration::propagate(const FusedSample& s, double dt) {
  check_tick(s, dt);
  const Mat3 R = gamma_.toRotationMatrix();
  const Vec3 thrust = R * s.thrust;
  alpha_ += beta_ * dt + 0.5 * thrust * dt * dt;
  beta_ += thrust * dt;
  fsum_ += R * (s.accel - lin_ba_ - s.thrust) * dt;
  gamma_ = (gamma_ * tick_rotation((s.gyro - lin_bw_) * dt).dq).normalized();
  dt_total_ += dt;
}

void DynPreintegration::propagate_covariance(const FusedSample& s, double dt) {
  check_tick(s, dt);
  const Mat3 R = gamma_.toRotationMatrix();
  const Vec3 f = s.accel - lin_ba_ - s.thrust;
  const TickRotation tick = tick_rotation((s.gyro - lin_bw_) * dt);
  const Mat3 B = tick.dtheta_dx * dt;
  const double dt2 = dt * dt;

  Mat18 F = Mat18::Identity();
  F.block<3, 3>(kAlpha, kBeta) = dt * Mat3::Identity();
  F.block<3, 3>(kAlpha, kTheta) = -0.5 * dt2 * R * skew(s.thrust);
  F.block<3, 3>(kBeta, kTheta) = -dt * R * skew(s.thrust);
  F.block<3, 3>(kForce, kTheta) = -dt * R * skew(f);
  F.block<3, 3>(kForce, kBa) = -dt * R;
  F.block<3, 3>(kTheta, kTheta) = tick.dR.transpose();
  F.block<3, 3>(kTheta, kBw) = -B;

  // Noise order [n_T, n_w, n_bw, n_a, n_ba].
  Eigen::Matrix<double, 18, 15> G = Eigen::Matrix<double, 18, 15>::Zero();
  G.block<3, 3>(kAlpha, 0) = 0.5 * dt2 * R;
  G.block<3, 3>(kBeta, 0) = dt * R;
  G.block<3, 3>(kForce, 0) = -dt * R;
  G.block<3, 3>(kForce, 9) = dt * R;
  G.block<3, 3>(kTheta, 3) = B;
  G.block<3, 3>(kBw, 6) = Mat3::Identity();
  G.block<3, 3>(kBa, 12) = Mat3::Identity();

  Eigen::Matrix<double, 15, 1> q;
  q << Vec3::Constant(noise_.sigma_T * noise_.sigma_T), Vec3::Constant(noise_.sigma_w * noise_.sigma_w),
      Vec3::Constant(noise_.sigma_bw * noise_.sigma_bw * dt),
      Vec3::Constant(noise_.sigma_a * noise_.sigma_a),
      Vec3::Constant(noise_.sigma_ba * noise_.sigma_ba * dt);

  P_ = F * P_ * F.transpose() + G * q.asDiagonal() * G.transpose();
  P_ = 0.5 * (P_ + P_.transpose()).eval();
  J_ = F * J_;
}

void DynPreintegration::finalize() {
  if (finalized_) return;
  if (!(dt_total_ > 0.0)) throw std::logic_error("dyn_finalize: zero-length interval");
  const double inv = 1.0 / dt_total_;
  favg_ = fsum_ * inv;
  P_.middleRows<3>(kForce) *= inv;
  P_.middleCols<3>(kForce) *= inv;
  J_.middleRows<3>(kForce) *= inv;
  finalized_ = true;
}

DynPreintegration DynPreintegration::from_knots(const std::vector<FusedSample>& knots,
                                                const Vec3& lin_ba, const Vec3& lin_bw,
                                                const NoiseConfig& noise) {
  if (knots.size() < 2) throw std::invalid_argument("dynamics preintegration: empty interval");
  DynPreintegration b(lin_ba, lin_bw, noise);
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double dt = knots[i + 1].t - knots[i].t;
    if (dt <= kTimeEps) continue;
    b.integrate(knots[i], dt);
  }
  b.finalize();
  b.knots_ = knots;
  return b;
}

void DynPreintegration::repropagate(const Vec3& lin_ba, const Vec3& lin_bw) {
  if (knots_.empty()) throw std::logic_error("repropagate: block has no stored measurements");
  *this = from_knots(knots_, lin_ba, lin_bw, noise_);
}

DynPreintegration dyn_propagate(DynPreintegration block, const FusedSample& s, double dt) {
  block.propagate(s, dt);
  return block;
}

DynPreintegration dyn_propagate_covariance(DynPreintegration block, const FusedSample& s,
                                           double dt) {
  block.propagate_covariance(s, dt);
  return block;
}

DynPreintegration dyn_finalize(DynPreintegration block) {
  block.finalize();
  return block;
}

CorrectedDyn dyn_correct_bias(const DynPreintegration& block, const Vec3& ba_new,
                              const Vec3& bw_new) {
  if (!block.finalized()) throw std::logic_error("dyn_correct_bias: block not finalized");
  using B = DynPreintegration;
  const Vec3 dba = ba_new - block.lin_ba();
  const Vec3 dbw = bw_new - block.lin_bw();
  const Mat18& J = block.J_full();
  CorrectedDyn c;
  c.alpha = block.alpha() + J.block<3, 3>(B::kAlpha, B::kBa) * dba + J.block<3, 3>(B::kAlpha, B::kBw) * dbw;
  c.beta = block.beta() + J.block<3, 3>(B::kBeta, B::kBa) * dba + J.block<3, 3>(B::kBeta, B::kBw) * dbw;
  c.favg = block.favg() + J.block<3, 3>(B::kForce, B::kBa) * dba + J.block<3, 3>(B::kForce, B::kBw) * dbw;
  return c;
}

nlohmann::json to_json(const DynPreintegration& b) {
  auto vec = [](const auto& v) {
    std::vector<double> out(v.data(), v.data() + v.size());
    return out;
  };
  auto mat = [](const Mat15& m) {
    std::vector<std::vector<double>> out(15, std::vector<double>(15));
    for (int r = 0; r < 15; ++r)
      for (int c = 0; c < 15; ++c) out[r][c] = m(r, c);
    return out;
  };
  return nlohmann::json{{"alpha", vec(b.alpha())},
                        {"beta", vec(b.beta())},
                        {"favg", vec(b.favg())},
                        {"gamma", {b.gamma().w(), b.gamma().x(), b.gamma().y(), b.gamma().z()}},
                        {"dt", b.dt_total()},
                        {"finalized", b.finalized()},
                        {"P", mat(b.P())},
                        {"J", mat(b.J())}};
}

// ---------------------------------------------------------------------------
// ImuPreintegration

ImuPreintegration::ImuPreintegration(const Vec3& lin_ba, const Vec3& lin_bw,
                                     const NoiseConfig& noise)
    : lin_ba_(lin_ba), lin_bw_(lin_bw), noise_(noise) {}

void ImuPreintegration::integrate(const FusedSample& s0, const FusedSample& s1, double dt) {
  if (!(dt > 0.0) || !(dt < 0.1)) throw std::invalid_argument("imu preintegration: bad dt");
  const Mat3 R0 = dq_.toRotationMatrix();
  const TickRotation tick = tick_rotation((0.5 * (s0.gyro + s1.gyro) - lin_bw_) * dt);
  const Mat3 R1 = R0 * tick.dR;
  const Vec3 A0 = s0.accel - lin_ba_, A1 = s1.accel - lin_ba_;
  const Vec3 acc = 0.5 * (R0 * A0 + R1 * A1);
  const Mat3 B = tick.dtheta_dx * dt;
  const double dt2 = dt * dt;

  const Mat3 M_theta = -0.5 * (R0 * skew(A0) + R1 * skew(A1) * tick.dR.transpose());
  const Mat3 M_ba = -0.5 * (R0 + R1);
  const Mat3 M_bw = 0.5 * R1 * skew(A1) * B;

  Mat15 F = Mat15::Identity();
  F.block<3, 3>(kP, kV) = dt * Mat3::Identity();
  F.block<3, 3>(kP, kTheta) = 0.5 * dt2 * M_theta;
  F.block<3, 3>(kP, kBa) = 0.5 * dt2 * M_ba;
  F.block<3, 3>(kP, kBw) = 0.5 * dt2 * M_bw;
  F.block<3, 3>(kV, kTheta) = dt * M_theta;
  F.block<3, 3>(kV, kBa) = dt * M_ba;
  F.block<3, 3>(kV, kBw) = dt * M_bw;
  F.block<3, 3>(kTheta, kTheta) = tick.dR.transpose();
  F.block<3, 3>(kTheta, kBw) = -B;

  // Noise order [n_a, n_w, n_ba, n_bw].
  Eigen::Matrix<double, 15, 12> G = Eigen::Matrix<double, 15, 12>::Zero();
  G.block<3, 3>(kP, 0) = -0.5 * dt2 * M_ba;
  G.block<3, 3>(kV, 0) = -dt * M_ba;
  G.block<3, 3>(kP, 3) = -0.5 * dt2 * M_bw;
  G.block<3, 3>(kV, 3) = -dt * M_bw;
  G.block<3, 3>(kTheta, 3) = B;
  G.block<3, 3>(kBa, 6) = Mat3::Identity();
  G.block<3, 3>(kBw, 9) = Mat3::Identity();
  Eigen::Matrix<double, 12, 1> q;
  q << Vec3::Constant(noise_.sigma_a * noise_.sigma_a), Vec3::Constant(noise_.sigma_w * noise_.sigma_w),
      Vec3::Constant(noise_.sigma_ba * noise_.sigma_ba * dt),
      Vec3::Constant(noise_.sigma_bw * noise_.sigma_bw * dt);

  P_ = F * P_ * F.transpose() + G * q.asDiagonal() * G.transpose();
  P_ = 0.5 * (P_ + P_.transpose()).eval();
  J_ = F * J_;

  dp_ += dv_ * dt + 0.5 * acc * dt2;
  dv_ += acc * dt;
  dq_ = (dq_ * tick.dq).normalized();
  dt_total_ += dt;
}

ImuPreintegration ImuPreintegration::from_knots(const std::vector<FusedSample>& knots,
                                                const Vec3& lin_ba, const Vec3& lin_bw,
                                                const NoiseConfig& noise) {
  if (knots.size() < 2) throw std::invalid_argument("imu preintegration: empty interval");
  ImuPreintegration b(lin_ba, lin_bw, noise);
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double dt = knots[i + 1].t - knots[i].t;
    if (dt <= kTimeEps) continue;
    b.integrate(knots[i], knots[i + 1], dt);
  }
  if (!(b.dt_total_ > 0.0)) throw std::invalid_argument("imu preintegration: empty interval");
  b.knots_ = knots;
  return b;
}

void ImuPreintegration::repropagate(const Vec3& lin_ba, const Vec3& lin_bw) {
  if (knots_.empty()) throw std::logic_error("repropagate: block has no stored measurements");
  *this = from_knots(knots_, lin_ba, lin_bw, noise_);
}

ImuPreintegration::Corrected ImuPreintegration::correct(const Vec3& ba, const Vec3& bw) const {
  const Vec3 dba = ba - lin_ba_, dbw = bw - lin_bw_;
  Corrected c;
  c.dp = dp_ + J_.block<3, 3>(kP, kBa) * dba + J_.block<3, 3>(kP, kBw) * dbw;
  c.dv = dv_ + J_.block<3, 3>(kV, kBa) * dba + J_.block<3, 3>(kV, kBw) * dbw;
  c.dq = (dq_ * quat_exp(J_.block<3, 3>(kTheta, kBw) * dbw)).normalized();
  return c;
}

ImuPreintegration imu_preintegrate(const std::vector<FusedSample>& knots, const Vec3& lin_ba,
                                   const Vec3& lin_bw, const NoiseConfig& noise) {
  return ImuPreintegration::from_knots(knots, lin_ba, lin_bw, noise);
}

}  // namespace vid
