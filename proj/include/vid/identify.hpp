#pragma once

#include "vid/types.hpp"

#include <filesystem>
#include <vector>

namespace vid {

/// Per-rotor thrust coefficients tau_i (N s^2 / rad^2) with thrust_i = tau_i w_i^2.
/// The rotors decouple under the equal hover split, so Pmat stays diagonal.
struct RlsState {
  Vec4 theta = Vec4::Constant(1e-4);
  Mat4 Pmat = 1e2 * Mat4::Identity();
  double forgetting = 0.999;
  int updates = 0;

  void validate() const;
};

/// One RLS step per rotor: regressor w_i^2, target mass * 9.79 / 4.
/// Rotors with w_i = 0 are skipped.
RlsState rls_update(RlsState state, const Vec4& omega_rotor, double mass);

/// Closed-form per-rotor least squares over the same samples.
Vec4 batch_thrust_coeffs(const std::vector<Vec4>& omegas, double mass);

struct HoverThresholds {
  double max_gyro = 0.05;       // rad/s
  double accel_tolerance = 0.3; // m/s^2 around 9.79
  double min_duration = 1.0;    // s
};

struct HoverSegment {
  double t0 = 0.0;
  double t1 = 0.0;
};

/// Contiguous IMU runs that look like hover and last at least min_duration.
std::vector<HoverSegment> detect_hover(const SensorLog& log, const HoverThresholds& th = {});

struct IdentifyResult {
  Vec4 tau = Vec4::Zero();
  double residual_rms = 0.0;  // N, per rotor and sample
  int n_samples = 0;
  std::vector<HoverSegment> segments;
};

/// Runs RLS over the measured rotor speeds inside hover segments.
IdentifyResult identify_thrust(const SensorLog& log, const HoverThresholds& th = {},
                               RlsState init = {});

/// {tau: [4], residual_rms, n_samples}
void write_coeffs_json(const std::filesystem::path& path, const IdentifyResult& result);

}  // namespace vid
