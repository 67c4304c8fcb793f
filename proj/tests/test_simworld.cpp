#include "vid/preintegration.hpp"
#include "vid/simworld.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace vid;

namespace {

TruthModel circle_model(double duration, ForceProfile force = {}) {
  TrajectoryParams p;
  p.radius = 2.0;
  p.period = 10.0;
  p.z_amplitude = 0.5;
  p.follow_heading = false;
  return TruthModel(Trajectory(TrajectoryKind::circle, duration, p), force);
}

TruthModel hover_model(double duration, ForceProfile force = {}) {
  TrajectoryParams p;
  p.center = Vec3(0, 0, 1);
  return TruthModel(Trajectory(TrajectoryKind::hover, duration, p), force);
}

ForceProfile payload(const Vec3& f) {
  ForceProfile fp;
  fp.kind = ForceKind::constant_payload;
  fp.payload = f;
  return fp;
}

// IMU sample at exactly time t (rates are commensurate).
const ImuSample& imu_at(const SensorLog& log, double t) {
  const auto i = static_cast<std::size_t>(std::lround(t * log.noise.imu_hz));
  return log.imu.at(i);
}

}  // namespace

TEST(Simworld, HoverIsStationary) {
  TrajectoryParams p;
  p.center = Vec3(0, 0, 1);
  const auto traj = generate_trajectory(TrajectoryKind::hover, 10.0, p);
  ASSERT_EQ(traj.size(), 4001u);
  for (const auto& s : traj) {
    EXPECT_EQ(s.v_w, Vec3::Zero());
    EXPECT_EQ(s.p_w, Vec3(0, 0, 1));
  }
}

TEST(Simworld, CircleSpeedIsConstant) {
  TrajectoryParams p;
  p.radius = 2.0;
  p.period = 10.0;
  const auto traj = generate_trajectory(TrajectoryKind::circle, 10.0, p);
  const double expected = 2.0 * M_PI * 2.0 / 10.0;
  EXPECT_NEAR(expected, 1.2566, 1e-4);
  for (const auto& s : traj) EXPECT_NEAR(s.v_w.norm(), expected, 1e-6);
}

TEST(Simworld, PolylineHitsEndpoints) {
  TrajectoryParams p;
  p.waypoints = {Vec3(0, 0, 1), Vec3(2, 1, 1.5), Vec3(3, -1, 1)};
  const auto traj = generate_trajectory(TrajectoryKind::polyline, 6.0, p);
  EXPECT_LT((traj.front().p_w - p.waypoints.front()).norm(), 1e-9);
  EXPECT_LT((traj.back().p_w - p.waypoints.back()).norm(), 1e-9);
  const Trajectory tr(TrajectoryKind::polyline, 6.0, p);
  bool hit_mid = false;
  for (int i = 0; i <= 600; ++i)
    if ((tr.eval(i * 0.01).p - p.waypoints[1]).norm() < 1e-9) hit_mid = true;
  EXPECT_TRUE(hit_mid);
}

TEST(Simworld, VelocityIsDerivativeOfPosition) {
  TrajectoryParams p;
  p.waypoints = {Vec3(0, 0, 1), Vec3(2, 1, 1.5), Vec3(3, -1, 1)};
  for (auto kind : {TrajectoryKind::circle, TrajectoryKind::lemniscate, TrajectoryKind::polyline}) {
    const Trajectory tr(kind, 6.0, p);
    for (double t = 0.3; t < 5.7; t += 0.37) {
      const double h = 1e-5;
      const Vec3 dv = (tr.eval(t + h).p - tr.eval(t - h).p) / (2 * h);
      const Vec3 da = (tr.eval(t + h).v - tr.eval(t - h).v) / (2 * h);
      EXPECT_LT((dv - tr.eval(t).v).norm(), 1e-6) << to_string(kind) << " t=" << t;
      EXPECT_LT((da - tr.eval(t).a).norm(), 1e-5) << to_string(kind) << " t=" << t;
    }
  }
}

TEST(Simworld, UnknownKindsThrow) {
  EXPECT_THROW(parse_trajectory_kind("spiral"), std::invalid_argument);
  EXPECT_THROW(parse_force_kind("tornado"), std::invalid_argument);
  EXPECT_THROW(Trajectory(TrajectoryKind::circle, 0.0, {}), std::invalid_argument);
}

TEST(Simworld, ForceProfiles) {
  TrajectoryParams p;
  p.center = Vec3(0, 0, 1);
  const auto traj = generate_trajectory(TrajectoryKind::hover, 1.0, p);
  for (const auto& s : apply_force_profile(traj, ForceProfile{})) EXPECT_EQ(s.f_ext_b, Vec3::Zero());
  for (const auto& s : apply_force_profile(traj, payload(Vec3(0, 0, -2))))
    EXPECT_LT((s.f_ext_b - Vec3(0, 0, -2)).norm(), 1e-12);

  ForceProfile rope;
  rope.kind = ForceKind::elastic_rope;
  rope.anchor = Vec3(0, 0, -2);  // 3 m below the drone
  rope.rest_length = 2.5;
  rope.stiffness = 4.0;
  for (const auto& s : apply_force_profile(traj, rope)) {
    EXPECT_NEAR(s.f_ext_b.norm(), 2.0, 1e-12);
    EXPECT_NEAR(s.f_ext_b.z(), -2.0, 1e-12);
  }
  rope.rest_length = 3.5;  // slack
  for (const auto& s : apply_force_profile(traj, rope)) EXPECT_EQ(s.f_ext_b, Vec3::Zero());

  ForceProfile gust;
  gust.kind = ForceKind::wind_gust;
  gust.gust_direction = Vec3(1, 0, 0);
  gust.gust_magnitude = 1.5;
  gust.gust_start = 0.3;
  gust.gust_stop = 0.7;
  gust.gust_ramp = 0.05;
  EXPECT_EQ(gust.world_force(0.1, Vec3::Zero()), Vec3::Zero());
  EXPECT_NEAR(gust.world_force(0.5, Vec3::Zero()).x(), 1.5, 1e-12);
  EXPECT_EQ(gust.world_force(0.9, Vec3::Zero()), Vec3::Zero());

  ForceProfile bad = rope;
  bad.stiffness = -1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Simworld, HoverSensorsNoiseless) {
  const auto log = synthesize_sensors(hover_model(2.0), Vec4::Constant(2e-6), 1.0,
                                      NoiseConfig::noiseless());
  for (const auto& s : log.imu) {
    EXPECT_LT((s.accel - Vec3(0, 0, 9.79)).norm(), 1e-9);
    EXPECT_LT(s.gyro.norm(), 1e-9);
  }
  for (const auto& r : log.rotor)
    EXPECT_LT((thrust_from_rotor(r.omega_rotor, log.thrust_coeffs, log.mass) - Vec3(0, 0, 9.79)).norm(),
              1e-9);
}

TEST(Simworld, HoverWithPayload) {
  const auto log = synthesize_sensors(hover_model(2.0, payload(Vec3(0, 0, -2))), Vec4::Constant(2e-6),
                                      1.3, NoiseConfig::noiseless());
  for (const auto& s : log.imu) EXPECT_LT((s.accel - Vec3(0, 0, 9.79)).norm(), 1e-9);
  for (const auto& r : log.rotor)
    EXPECT_LT((thrust_from_rotor(r.omega_rotor, log.thrust_coeffs, log.mass) - Vec3(0, 0, 11.79)).norm(),
              1e-9);
}

TEST(Simworld, ReconstructsExternalForce) {
  ForceProfile rope;
  rope.kind = ForceKind::elastic_rope;
  rope.anchor = Vec3(1.5, 0, -4);
  rope.stiffness = 1.0;
  rope.rest_length = 5.0;
  const auto log = synthesize_sensors(circle_model(5.0, rope), Vec4(2e-6, 2.1e-6, 1.9e-6, 2e-6), 1.2,
                                      NoiseConfig::noiseless());
  double max_f = 0.0;
  for (const auto& r : log.rotor) {
    const auto& imu = imu_at(log, r.t);
    ASSERT_NEAR(imu.t, r.t, 1e-12);
    const Vec3 T = thrust_from_rotor(r.omega_rotor, log.thrust_coeffs, log.mass);
    const auto it = std::lower_bound(log.truth.begin(), log.truth.end(), r.t - 1e-9,
                                     [](const GroundTruthSample& g, double t) { return g.t < t; });
    ASSERT_NEAR(it->t, r.t, 1e-9);
    EXPECT_LT((imu.accel - it->b_a - T - it->f_ext_b).norm(), 1e-9) << "t=" << r.t;
    max_f = std::max(max_f, it->f_ext_b.norm());
  }
  EXPECT_GT(max_f, 0.5);
}

TEST(Simworld, AccelMatchesDoubleDifferencedPosition) {
  const auto log = synthesize_sensors(circle_model(3.0), Vec4::Constant(2e-6), 1.0,
                                      NoiseConfig::noiseless());
  const double dt = 1.0 / log.noise.imu_hz;
  // truth holds IMU instants plus camera instants; select the IMU grid
  std::vector<const GroundTruthSample*> grid;
  for (const auto& g : log.truth) {
    const double k = g.t / dt;
    if (std::abs(k - std::round(k)) < 1e-6) grid.push_back(&g);
  }
  ASSERT_EQ(grid.size(), log.imu.size());
  for (std::size_t i = 1; i + 1 < grid.size(); i += 7) {
    const Vec3 a_num = (grid[i + 1]->p_w - 2.0 * grid[i]->p_w + grid[i - 1]->p_w) / (dt * dt);
    const Vec3 a_imu = grid[i]->q_wb.toRotationMatrix() * log.imu[i].accel + kGravity;
    EXPECT_LT((a_num - a_imu).norm(), 1e-4);
  }
}

TEST(Simworld, InfeasibleTrajectoryThrows) {
  TrajectoryParams p;
  p.radius = 30.0;
  p.period = 2.0;  // centripetal 296 m/s^2 is fine, but add a strong downward pull
  ForceProfile up = payload(Vec3(0, 0, 12.0));
  EXPECT_THROW(synthesize_sensors(TruthModel(Trajectory(TrajectoryKind::hover, 1.0, p), up),
                                  Vec4::Constant(2e-6), 1.0, NoiseConfig::noiseless()),
               InfeasibleTrajectory);
}

TEST(Simworld, DeterministicUnderSeed) {
  NoiseConfig n;
  n.seed = 42;
  const auto a = synthesize_sensors(circle_model(2.0), Vec4::Constant(2e-6), 1.0, n);
  const auto b = synthesize_sensors(circle_model(2.0), Vec4::Constant(2e-6), 1.0, n);
  ASSERT_EQ(a.imu.size(), b.imu.size());
  ASSERT_EQ(a.cam.size(), b.cam.size());
  for (std::size_t i = 0; i < a.imu.size(); ++i) {
    EXPECT_EQ(a.imu[i].accel, b.imu[i].accel);
    EXPECT_EQ(a.imu[i].gyro, b.imu[i].gyro);
  }
  for (std::size_t i = 0; i < a.rotor.size(); ++i) EXPECT_EQ(a.rotor[i].omega_rotor, b.rotor[i].omega_rotor);
  for (std::size_t i = 0; i < a.cam.size(); ++i) {
    EXPECT_EQ(a.cam[i].landmark_id, b.cam[i].landmark_id);
    EXPECT_EQ(a.cam[i].bearing, b.cam[i].bearing);
  }
  n.seed = 43;
  const auto c = synthesize_sensors(circle_model(2.0), Vec4::Constant(2e-6), 1.0, n);
  EXPECT_NE(a.imu[10].accel, c.imu[10].accel);
}

TEST(Simworld, EnoughLandmarksPerFrame) {
  SynthesisOptions opt;
  const auto log = synthesize_sensors(circle_model(4.0), Vec4::Constant(2e-6), 1.0, NoiseConfig{},
                                      CameraModel{}, opt);
  std::map<double, int> per_frame;
  for (const auto& o : log.cam) ++per_frame[o.frame_t];
  EXPECT_EQ(per_frame.size(), log.frame_times().size());
  for (const auto& [t, n] : per_frame) EXPECT_GE(n, opt.min_visible) << "t=" << t;
}
