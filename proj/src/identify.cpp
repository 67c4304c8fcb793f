#include "vid/identify.hpp"

#include "vid/log.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace vid {

void RlsState::validate() const {
  if (!theta.allFinite()) throw std::invalid_argument("rls: theta must be finite");
  if (!Pmat.allFinite() || (Pmat - Pmat.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
      Pmat.diagonal().minCoeff() < 0.0)
    throw std::invalid_argument("rls: Pmat must be symmetric PSD");
  if (!(forgetting > 0.9 && forgetting <= 1.0))
    throw std::invalid_argument("rls: forgetting must be in (0.9, 1]");
}

RlsState rls_update(RlsState s, const Vec4& omega, double mass) {
  if (!(mass > 0.0)) throw std::invalid_argument("rls_update: mass must be positive");
  if (!omega.allFinite()) throw std::invalid_argument("rls_update: non-finite rotor speed");
  const double y = mass * kGravityNorm / 4.0;
  const double lam = s.forgetting;
  for (int i = 0; i < 4; ++i) {
    const double x = omega[i] * omega[i];
    if (x == 0.0) continue;
    const double p = s.Pmat(i, i);
    const double k = p * x / (lam + x * p * x);
    s.theta[i] += k * (y - x * s.theta[i]);
    s.Pmat(i, i) = p / (lam + x * p * x);  // (p - k x p) / lam without the cancellation
  }
  ++s.updates;
  return s;
}

Vec4 batch_thrust_coeffs(const std::vector<Vec4>& omegas, double mass) {
  if (!(mass > 0.0)) throw std::invalid_argument("batch_thrust_coeffs: mass must be positive");
  const double y = mass * kGravityNorm / 4.0;
  Vec4 sxy = Vec4::Zero(), sxx = Vec4::Zero();
  for (const auto& w : omegas) {
    const Vec4 x = w.cwiseAbs2();
    sxy += x * y;
    sxx += x.cwiseAbs2();
  }
  Vec4 tau;
  for (int i = 0; i < 4; ++i)
    tau[i] = sxx[i] > 0.0 ? sxy[i] / sxx[i] : std::numeric_limits<double>::quiet_NaN();
  return tau;
}

std::vector<HoverSegment> detect_hover(const SensorLog& log, const HoverThresholds& th) {
  std::vector<HoverSegment> out;
  bool open = false;
  HoverSegment cur;
  auto close = [&] {
    if (open && cur.t1 - cur.t0 >= th.min_duration - 1e-9) out.push_back(cur);
    open = false;
  };
  for (const auto& s : log.imu) {
    const bool still = s.gyro.norm() < th.max_gyro &&
                       std::abs(s.accel.norm() - kGravityNorm) < th.accel_tolerance;
    if (!still) {
      close();
      continue;
    }
    if (!open) {
      cur.t0 = s.t;
      open = true;
    }
    cur.t1 = s.t;
  }
  close();
  return out;
}

IdentifyResult identify_thrust(const SensorLog& log, const HoverThresholds& th, RlsState state) {
  state.validate();
  IdentifyResult res;
  res.segments = detect_hover(log, th);
  std::vector<Vec4> used;
  std::size_t seg = 0;
  for (const auto& r : log.rotor) {
    while (seg < res.segments.size() && res.segments[seg].t1 < r.t - 1e-9) ++seg;
    if (seg == res.segments.size()) break;
    if (r.t < res.segments[seg].t0 - 1e-9) continue;
    state = rls_update(state, r.omega_rotor, log.mass);
    used.push_back(r.omega_rotor);
  }
  res.tau = state.theta;
  res.n_samples = static_cast<int>(used.size());
  if (used.empty()) {
    log_warn("identify: no hover samples; coefficients left at the initial guess");
    return res;
  }
  const double y = log.mass * kGravityNorm / 4.0;
  double ss = 0.0;
  for (const auto& w : used) ss += (y - res.tau.cwiseProduct(w.cwiseAbs2()).array()).square().sum();
  res.residual_rms = std::sqrt(ss / (4.0 * static_cast<double>(used.size())));
  return res;
}

void write_coeffs_json(const std::filesystem::path& path, const IdentifyResult& result) {
  nlohmann::json j;
  j["tau"] = {result.tau[0], result.tau[1], result.tau[2], result.tau[3]};
  j["residual_rms"] = result.residual_rms;
  j["n_samples"] = result.n_samples;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace vid
