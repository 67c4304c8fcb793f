#pragma once

#include "vid/types.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace vid {

class InfeasibleTrajectory : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TrajectoryKind { hover, circle, lemniscate, polyline };

TrajectoryKind parse_trajectory_kind(const std::string& name);
std::string to_string(TrajectoryKind kind);

struct TrajectoryParams {
  Vec3 center{0.0, 0.0, 1.0};  // hover point, circle / lemniscate center
  double radius = 2.0;
  double period = 10.0;
  double z_amplitude = 0.0;    // vertical oscillation for circle / lemniscate
  double yaw0 = 0.0;
  double yaw_rate = 0.0;       // rad/s; circle uses 2 pi / period when follow_heading
  bool follow_heading = true;  // circle only
  std::vector<Vec3> waypoints; // polyline
};

struct KinematicPoint {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  double yaw = 0.0;
};

/// Continuous C2 position trajectory with an analytic heading.
class Trajectory {
 public:
  Trajectory(TrajectoryKind kind, double duration, TrajectoryParams params);

  KinematicPoint eval(double t) const;
  double duration() const { return duration_; }
  TrajectoryKind kind() const { return kind_; }
  const TrajectoryParams& params() const { return params_; }

 private:
  TrajectoryKind kind_;
  double duration_;
  TrajectoryParams params_;
};

enum class ForceKind { zero, constant_payload, elastic_rope, wind_gust };

ForceKind parse_force_kind(const std::string& name);
std::string to_string(ForceKind kind);

struct ForceProfile {
  ForceKind kind = ForceKind::zero;
  Vec3 payload = Vec3::Zero();          // world frame, m/s^2
  Vec3 anchor = Vec3::Zero();           // rope anchor, m
  double stiffness = 0.0;               // 1/s^2
  double rest_length = 0.0;             // m
  Vec3 gust_direction = Vec3::UnitX();
  double gust_magnitude = 0.0;          // m/s^2
  double gust_start = 0.0;
  double gust_stop = 0.0;
  double gust_ramp = 0.25;              // smoothstep edge width, s

  void validate() const;
  /// Mass-normalized external force in the world frame.
  Vec3 world_force(double t, const Vec3& p_w) const;
};

/// Ground-truth evaluator combining a trajectory with a force profile. The
/// attitude keeps body z along the required thrust and the heading from the
/// trajectory, so thrust is always body-z aligned.
class TruthModel {
 public:
  TruthModel(Trajectory trajectory, ForceProfile profile);

  struct State {
    double t = 0.0;
    Vec3 p = Vec3::Zero();
    Vec3 v = Vec3::Zero();
    Vec3 a = Vec3::Zero();
    Mat3 R = Mat3::Identity();
    Vec3 omega_b = Vec3::Zero();
    Vec3 f_ext_b = Vec3::Zero();
    double thrust = 0.0;  // mass-normalized, along body z
  };

  /// Throws InfeasibleTrajectory when the required thrust is not positive.
  State eval(double t) const;
  Mat3 attitude(double t) const;

  const Trajectory& trajectory() const { return trajectory_; }
  const ForceProfile& profile() const { return profile_; }

 private:
  Mat3 attitude_from(const KinematicPoint& k, const Vec3& f_w, double t) const;

  Trajectory trajectory_;
  ForceProfile profile_;
};

/// Samples the force-free trajectory at `rate_hz` over [0, duration].
std::vector<GroundTruthSample> generate_trajectory(TrajectoryKind kind, double duration,
                                                   const TrajectoryParams& params,
                                                   double rate_hz = 400.0);

/// Fills f_ext_b of every sample from the profile, using each sample's own
/// attitude and position.
std::vector<GroundTruthSample> apply_force_profile(std::vector<GroundTruthSample> traj,
                                                   const ForceProfile& profile);

struct LandmarkField {
  std::vector<Vec3> points;
};

struct SynthesisOptions {
  int landmark_count = 500;
  int min_visible = 20;
};

/// Emits IMU, rotor speed and landmark streams plus ground truth.
SensorLog synthesize_sensors(const TruthModel& model, const Vec4& thrust_coeffs, double mass,
                             const NoiseConfig& noise, const CameraModel& camera = {},
                             const SynthesisOptions& options = {},
                             LandmarkField* field_out = nullptr);

/// Per-rotor speeds that produce mass-normalized collective thrust with an
/// equal split across rotors.
Vec4 rotor_speeds_for_thrust(double thrust, const Vec4& thrust_coeffs, double mass);

}  // namespace vid
