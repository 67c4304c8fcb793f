#include "vid/identify.hpp"
#include "vid/preintegration.hpp"
#include "vid/simworld.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

using namespace vid;

namespace {

ImuSample imu(double t, const Vec3& accel, const Vec3& gyro) {
  ImuSample s;
  s.t = t;
  s.accel = accel;
  s.gyro = gyro;
  return s;
}

SensorLog hover_log(double duration, const Vec4& tau, double mass, NoiseConfig noise) {
  TrajectoryParams p;
  p.center = Vec3(0, 0, 1);
  return synthesize_sensors(TruthModel(Trajectory(TrajectoryKind::hover, duration, p), {}), tau, mass,
                            noise);
}

}  // namespace

TEST(Identify, NoiselessHoverSpeed) {
  RlsState s;
  for (int i = 0; i < 10; ++i) s = rls_update(s, Vec4::Constant(100.0), 1.0);
  EXPECT_EQ(s.updates, 10);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(s.theta[i], 2.4475e-4, 1e-9);
}

TEST(Identify, NoUpdatesKeepsPrior) {
  const RlsState s;
  const IdentifyResult r = identify_thrust(SensorLog{}, {}, s);
  EXPECT_EQ(r.n_samples, 0);
  EXPECT_EQ(r.tau, s.theta);
}

TEST(Identify, NoForgettingMatchesBatch) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(900.0, 1300.0);
  std::vector<Vec4> omegas;
  RlsState s;
  s.forgetting = 1.0;
  s.Pmat = 1e6 * Mat4::Identity();
  for (int i = 0; i < 300; ++i) {
    omegas.emplace_back(u(rng), u(rng), u(rng), u(rng));
    s = rls_update(s, omegas.back(), 1.2);
  }
  const Vec4 batch = batch_thrust_coeffs(omegas, 1.2);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(s.theta[i], batch[i], 1e-9 * batch[i] + 1e-15);
}

TEST(Identify, SpeedNoiseWithinTwoPercent) {
  const double mass = 1.0;
  const Vec4 tau(2e-6, 2.2e-6, 1.8e-6, 2.1e-6);
  const Vec4 w0 = (mass * 9.79 / 4.0 * tau.cwiseInverse()).cwiseSqrt();
  double worst = 0.0;
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.01);
    RlsState s;
    for (int k = 0; k < 500; ++k) {
      Vec4 w = w0;
      for (int i = 0; i < 4; ++i) w[i] *= 1.0 + n(rng);
      s = rls_update(s, w, mass);
    }
    worst = std::max(worst, ((s.theta - tau).cwiseQuotient(tau)).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(worst, 0.02);
}

TEST(Identify, ZeroSpeedSkipped) {
  RlsState s;
  const RlsState s1 = rls_update(s, Vec4(0.0, 100.0, 100.0, 100.0), 1.0);
  EXPECT_EQ(s1.theta[0], s.theta[0]);
  EXPECT_EQ(s1.Pmat(0, 0), s.Pmat(0, 0));
  EXPECT_NE(s1.theta[1], s.theta[1]);
}

TEST(Identify, ValidateRejectsBadState) {
  RlsState s;
  s.forgetting = 0.5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = RlsState{};
  s.Pmat(0, 1) = 1.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = RlsState{};
  s.theta[2] = std::nan("");
  EXPECT_THROW(s.validate(), std::invalid_argument);
  EXPECT_THROW(rls_update(RlsState{}, Vec4::Constant(100.0), 0.0), std::invalid_argument);
}

TEST(Identify, PureHoverIsOneSegment) {
  const SensorLog log = hover_log(5.0, Vec4::Constant(2e-6), 1.0, NoiseConfig{});
  const auto segs = detect_hover(log);
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_NEAR(segs[0].t0, log.imu.front().t, 1e-12);
  EXPECT_NEAR(segs[0].t1, log.imu.back().t, 1e-12);
}

TEST(Identify, AggressiveFlightHasNoHover) {
  TrajectoryParams p;
  p.radius = 2.0;
  p.period = 3.0;
  p.follow_heading = true;
  const SensorLog log = synthesize_sensors(
      TruthModel(Trajectory(TrajectoryKind::circle, 6.0, p), {}), Vec4::Constant(2e-6), 1.0, NoiseConfig{});
  EXPECT_TRUE(detect_hover(log).empty());
}

TEST(Identify, HoverMoveHoverGivesTwoSegments) {
  SensorLog log;
  for (int i = 0; i <= 2000; ++i) {
    const double t = i / 400.0;
    const bool moving = t > 2.0 && t < 3.0;
    log.imu.push_back(imu(t, moving ? Vec3(2.0, 0, 10.5) : Vec3(0, 0, 9.79),
                          moving ? Vec3(0, 0, 0.6) : Vec3::Zero()));
  }
  const auto segs = detect_hover(log);
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_NEAR(segs[0].t0, 0.0, 1e-12);
  EXPECT_NEAR(segs[0].t1, 2.0, 1e-12);
  EXPECT_NEAR(segs[1].t0, 3.0, 1e-12);
  EXPECT_NEAR(segs[1].t1, 5.0, 1e-12);

  HoverThresholds th;
  th.min_duration = 2.5;
  EXPECT_TRUE(detect_hover(log, th).empty());
}

TEST(Identify, NoiselessSimulatedHoverRecoversCoefficients) {
  const Vec4 tau(2e-6, 2.2e-6, 1.8e-6, 2.1e-6);
  const SensorLog log = hover_log(3.0, tau, 1.3, NoiseConfig::noiseless());
  const IdentifyResult r = identify_thrust(log);
  EXPECT_EQ(r.n_samples, static_cast<int>(log.rotor.size()));
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(r.tau[i] / tau[i], 1.0, 1e-9);
  EXPECT_LT(r.residual_rms, 1e-9);
}

TEST(Identify, ThrustErrorBoundedByCoefficientError) {
  const Vec4 tau(2e-6, 2.2e-6, 1.8e-6, 2.1e-6);
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    NoiseConfig n;
    n.seed = seed;
    const SensorLog log = hover_log(4.0, tau, 1.0, n);
    const IdentifyResult r = identify_thrust(log);
    ASSERT_GT(r.n_samples, 100);
    const double tau_err = (r.tau - tau).cwiseQuotient(tau).cwiseAbs().maxCoeff();
    for (const auto& s : log.rotor) {
      const double T_true = thrust_from_rotor(s.omega_rotor, tau, log.mass).z();
      const double T_hat = thrust_from_rotor(s.omega_rotor, r.tau, log.mass).z();
      EXPECT_LE(std::abs(T_hat - T_true) / T_true, tau_err + 1e-12);
    }
  }
}

TEST(Identify, WritesCoeffsJson) {
  IdentifyResult r;
  r.tau = Vec4(1e-6, 2e-6, 3e-6, 4e-6);
  r.residual_rms = 0.01;
  r.n_samples = 7;
  const auto path = std::filesystem::temp_directory_path() / "vid_test_coeffs.json";
  write_coeffs_json(path, r);
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  ASSERT_EQ(j["tau"].size(), 4u);
  EXPECT_DOUBLE_EQ(j["tau"][2].get<double>(), 3e-6);
  EXPECT_EQ(j["n_samples"].get<int>(), 7);
}
