#pragma once

#include "vid/geometry.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vid {

struct ImuSample {
  double t = 0.0;
  Vec3 accel = Vec3::Zero();  // specific force, body frame
  Vec3 gyro = Vec3::Zero();
};

struct RotorSpeedSample {
  double t = 0.0;
  Vec4 omega_rotor = Vec4::Zero();  // rad/s
};

struct LandmarkObservation {
  double frame_t = 0.0;
  std::int64_t landmark_id = 0;
  Vec2 bearing = Vec2::Zero();  // normalized image coordinates
  double pixel_sigma = 1.0;
};

struct GroundTruthSample {
  double t = 0.0;
  Vec3 p_w = Vec3::Zero();
  Vec3 v_w = Vec3::Zero();
  Quat q_wb = Quat::Identity();
  Vec3 f_ext_b = Vec3::Zero();  // mass-normalized external force
  Vec3 b_a = Vec3::Zero();
  Vec3 b_w = Vec3::Zero();
  // Not serialized; available for freshly simulated logs only.
  Vec3 a_w = Vec3::Zero();
  Vec3 omega_b = Vec3::Zero();
};

struct NoiseConfig {
  double sigma_a = 0.02;    // per sample
  double sigma_w = 0.002;   // per sample
  double sigma_T = 0.05;    // per sample
  double sigma_ba = 1e-4;   // per sqrt(s)
  double sigma_bw = 1e-5;   // per sqrt(s)
  double pixel_sigma = 1.0; // pixels
  double imu_hz = 400.0;
  double rmu_hz = 100.0;
  double cam_hz = 30.0;
  std::uint64_t seed = 1;

  static NoiseConfig noiseless() {
    NoiseConfig n;
    n.sigma_a = n.sigma_w = n.sigma_T = n.sigma_ba = n.sigma_bw = n.pixel_sigma = 0.0;
    return n;
  }
  void validate() const;
};

struct CameraModel {
  double focal_px = 460.0;
  double max_u = 0.8;  // half-width of the field of view in normalized coordinates
  double max_v = 0.6;
  double min_depth = 0.3;
};

/// Time-stamped sensor streams plus ground truth and the vehicle constants.
struct SensorLog {
  std::vector<ImuSample> imu;
  std::vector<RotorSpeedSample> rotor;
  std::vector<LandmarkObservation> cam;  // grouped by frame_t, ascending
  std::vector<GroundTruthSample> truth;
  double mass = 1.0;
  Vec4 thrust_coeffs = Vec4::Constant(2.0e-6);
  Vec3 gravity = kGravity;
  NoiseConfig noise;
  CameraModel camera;

  /// Distinct camera frame timestamps in ascending order.
  std::vector<double> frame_times() const;
};

/// Per-keyframe body state.
struct NavState {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Quat q = Quat::Identity();
  Vec3 ba = Vec3::Zero();
  Vec3 bw = Vec3::Zero();
  Vec3 f_ext = Vec3::Zero();  // average mass-normalized force over [t_k, t_k+1], body frame k

  Mat3 R() const { return q.toRotationMatrix(); }
};

}  // namespace vid
