#include "vid/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace vid {

namespace {

double smoothstep5(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

Vec3 gaussian3(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double x = n(rng), y = n(rng), z = n(rng);
  return sigma * Vec3(x, y, z);
}

std::vector<double> uniform_times(double duration, double rate) {
  std::vector<double> out;
  const auto n = static_cast<long>(std::floor(duration * rate + 1e-9));
  out.reserve(static_cast<std::size_t>(n + 1));
  for (long i = 0; i <= n; ++i) out.push_back(static_cast<double>(i) / rate);
  return out;
}

}  // namespace

TrajectoryKind parse_trajectory_kind(const std::string& name) {
  if (name == "hover") return TrajectoryKind::hover;
  if (name == "circle") return TrajectoryKind::circle;
  if (name == "lemniscate") return TrajectoryKind::lemniscate;
  if (name == "polyline") return TrajectoryKind::polyline;
  throw std::invalid_argument("unknown trajectory kind '" + name + "'");
}

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::hover: return "hover";
    case TrajectoryKind::circle: return "circle";
    case TrajectoryKind::lemniscate: return "lemniscate";
    case TrajectoryKind::polyline: return "polyline";
  }
  return "unknown";
}

Trajectory::Trajectory(TrajectoryKind kind, double duration, TrajectoryParams params)
    : kind_(kind), duration_(duration), params_(std::move(params)) {
  if (!(duration_ > 0.0) || !std::isfinite(duration_))
    throw std::invalid_argument("trajectory duration must be positive");
  if ((kind_ == TrajectoryKind::circle || kind_ == TrajectoryKind::lemniscate) &&
      !(params_.period > 0.0))
    throw std::invalid_argument("trajectory period must be positive");
  if (kind_ == TrajectoryKind::polyline && params_.waypoints.size() < 2)
    throw std::invalid_argument("polyline needs at least two waypoints");
}

KinematicPoint Trajectory::eval(double t) const {
  KinematicPoint k;
  const auto& P = params_;
  switch (kind_) {
    case TrajectoryKind::hover:
      k.p = P.center;
      k.yaw = P.yaw0 + P.yaw_rate * t;
      break;
    case TrajectoryKind::circle: {
      const double w = 2.0 * M_PI / P.period;
      const double c = std::cos(w * t), s = std::sin(w * t);
      k.p = P.center + Vec3(P.radius * c, P.radius * s, P.z_amplitude * s);
      k.v = w * Vec3(-P.radius * s, P.radius * c, P.z_amplitude * c);
      k.a = -w * w * Vec3(P.radius * c, P.radius * s, P.z_amplitude * s);
      k.yaw = P.yaw0 + (P.follow_heading ? w : P.yaw_rate) * t;
      break;
    }
    case TrajectoryKind::lemniscate: {
      const double w = 2.0 * M_PI / P.period;
      const double s1 = std::sin(w * t), c1 = std::cos(w * t);
      const double s2 = std::sin(2.0 * w * t), c2 = std::cos(2.0 * w * t);
      k.p = P.center + Vec3(P.radius * s1, 0.5 * P.radius * s2, P.z_amplitude * s1);
      k.v = Vec3(P.radius * w * c1, P.radius * w * c2, P.z_amplitude * w * c1);
      k.a = Vec3(-P.radius * w * w * s1, -2.0 * P.radius * w * w * s2,
                 -P.z_amplitude * w * w * s1);
      k.yaw = P.yaw0 + P.yaw_rate * t;
      break;
    }
    case TrajectoryKind::polyline: {
      const auto& W = P.waypoints;
      const auto segments = static_cast<double>(W.size() - 1);
      const double Ts = duration_ / segments;
      const double tc = std::clamp(t, 0.0, duration_);
      auto i = static_cast<std::size_t>(std::min(std::floor(tc / Ts), segments - 1.0));
      const double tau = (tc - static_cast<double>(i) * Ts) / Ts;
      const double s = tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
      const double ds = 30.0 * tau * tau * (1.0 - 2.0 * tau + tau * tau) / Ts;
      const double dds = (60.0 * tau - 180.0 * tau * tau + 120.0 * tau * tau * tau) / (Ts * Ts);
      const Vec3 d = W[i + 1] - W[i];
      if (tau >= 1.0 && i + 1 == W.size() - 1) {
        k.p = W.back();
      } else {
        k.p = W[i] + s * d;
        k.v = ds * d;
        k.a = dds * d;
      }
      k.yaw = P.yaw0 + P.yaw_rate * t;
      break;
    }
  }
  return k;
}

ForceKind parse_force_kind(const std::string& name) {
  if (name == "zero") return ForceKind::zero;
  if (name == "constant_payload") return ForceKind::constant_payload;
  if (name == "elastic_rope") return ForceKind::elastic_rope;
  if (name == "wind_gust") return ForceKind::wind_gust;
  throw std::invalid_argument("unknown force profile kind '" + name + "'");
}

std::string to_string(ForceKind kind) {
  switch (kind) {
    case ForceKind::zero: return "zero";
    case ForceKind::constant_payload: return "constant_payload";
    case ForceKind::elastic_rope: return "elastic_rope";
    case ForceKind::wind_gust: return "wind_gust";
  }
  return "unknown";
}

void ForceProfile::validate() const {
  const bool finite = payload.allFinite() && anchor.allFinite() && std::isfinite(stiffness) &&
                      std::isfinite(rest_length) && gust_direction.allFinite() &&
                      std::isfinite(gust_magnitude) && std::isfinite(gust_start) &&
                      std::isfinite(gust_stop) && std::isfinite(gust_ramp);
  if (!finite) throw std::invalid_argument("force profile parameters must be finite");
  if (stiffness < 0.0) throw std::invalid_argument("rope stiffness must be non-negative");
  if (rest_length < 0.0) throw std::invalid_argument("rope rest length must be non-negative");
  if (kind == ForceKind::wind_gust && gust_direction.norm() < 1e-12)
    throw std::invalid_argument("gust direction must be non-zero");
}

Vec3 ForceProfile::world_force(double t, const Vec3& p_w) const {
  switch (kind) {
    case ForceKind::zero:
      return Vec3::Zero();
    case ForceKind::constant_payload:
      return payload;
    case ForceKind::elastic_rope: {
      const Vec3 d = p_w - anchor;
      const double dist = d.norm();
      const double stretch = dist - rest_length;
      if (stretch <= 0.0 || dist < 1e-12) return Vec3::Zero();
      return -stiffness * stretch * d / dist;
    }
    case ForceKind::wind_gust: {
      if (t < gust_start || t > gust_stop) return Vec3::Zero();
      const double ramp = std::min(gust_ramp, 0.5 * (gust_stop - gust_start));
      double scale = 1.0;
      if (ramp > 0.0)
        scale = smoothstep5((t - gust_start) / ramp) * smoothstep5((gust_stop - t) / ramp);
      return scale * gust_magnitude * gust_direction.normalized();
    }
  }
  return Vec3::Zero();
}

TruthModel::TruthModel(Trajectory trajectory, ForceProfile profile)
    : trajectory_(std::move(trajectory)), profile_(std::move(profile)) {
  profile_.validate();
}

Mat3 TruthModel::attitude_from(const KinematicPoint& k, const Vec3& f_w, double t) const {
  const Vec3 thrust_w = k.a - kGravity - f_w;
  if (thrust_w.z() <= 0.0 || thrust_w.norm() < 1e-3)
    throw InfeasibleTrajectory("required thrust is not positive (thrust_z=" +
                               std::to_string(thrust_w.z()) + " m/s^2 at t=" +
                               std::to_string(t) + " s)");
  const Vec3 zb = thrust_w.normalized();
  const Vec3 xc(std::cos(k.yaw), std::sin(k.yaw), 0.0);
  const Vec3 yb = zb.cross(xc).normalized();
  const Vec3 xb = yb.cross(zb);
  Mat3 R;
  R.col(0) = xb;
  R.col(1) = yb;
  R.col(2) = zb;
  return R;
}

Mat3 TruthModel::attitude(double t) const {
  const KinematicPoint k = trajectory_.eval(t);
  return attitude_from(k, profile_.world_force(t, k.p), t);
}

TruthModel::State TruthModel::eval(double t) const {
  State s;
  s.t = t;
  const KinematicPoint k = trajectory_.eval(t);
  const Vec3 f_w = profile_.world_force(t, k.p);
  s.p = k.p;
  s.v = k.v;
  s.a = k.a;
  s.R = attitude_from(k, f_w, t);
  constexpr double h = 1e-5;
  const Mat3 Rm = attitude(t - h);
  const Mat3 Rp = attitude(t + h);
  s.omega_b = so3_log(Rm.transpose() * Rp) / (2.0 * h);
  s.f_ext_b = s.R.transpose() * f_w;
  s.thrust = (k.a - kGravity - f_w).norm();
  return s;
}

std::vector<GroundTruthSample> generate_trajectory(TrajectoryKind kind, double duration,
                                                   const TrajectoryParams& params,
                                                   double rate_hz) {
  if (!(rate_hz > 0.0)) throw std::invalid_argument("sample rate must be positive");
  const TruthModel model(Trajectory(kind, duration, params), ForceProfile{});
  std::vector<GroundTruthSample> out;
  for (double t : uniform_times(duration, rate_hz)) {
    const auto s = model.eval(t);
    GroundTruthSample g;
    g.t = t;
    g.p_w = s.p;
    g.v_w = s.v;
    g.q_wb = Quat(s.R).normalized();
    g.a_w = s.a;
    g.omega_b = s.omega_b;
    out.push_back(g);
  }
  return out;
}

std::vector<GroundTruthSample> apply_force_profile(std::vector<GroundTruthSample> traj,
                                                   const ForceProfile& profile) {
  if (traj.empty()) throw std::invalid_argument("apply_force_profile: empty trajectory");
  profile.validate();
  for (auto& s : traj)
    s.f_ext_b = s.q_wb.toRotationMatrix().transpose() * profile.world_force(s.t, s.p_w);
  return traj;
}

Vec4 rotor_speeds_for_thrust(double thrust, const Vec4& thrust_coeffs, double mass) {
  Vec4 w;
  const double per_rotor = std::max(0.0, mass * thrust / 4.0);
  for (int i = 0; i < 4; ++i) w[i] = std::sqrt(per_rotor / thrust_coeffs[i]);
  return w;
}

namespace {

bool project(const CameraModel& cam, const Mat3& R, const Vec3& p, const Vec3& L, Vec2* uv) {
  const Vec3 pb = R.transpose() * (L - p);
  if (pb.z() < cam.min_depth) return false;
  const double u = pb.x() / pb.z(), v = pb.y() / pb.z();
  if (std::abs(u) > cam.max_u || std::abs(v) > cam.max_v) return false;
  if (uv) *uv = Vec2(u, v);
  return true;
}

}  // namespace

SensorLog synthesize_sensors(const TruthModel& model, const Vec4& thrust_coeffs, double mass,
                             const NoiseConfig& noise, const CameraModel& camera,
                             const SynthesisOptions& options, LandmarkField* field_out) {
  noise.validate();
  if (!(mass > 0.0)) throw std::invalid_argument("mass must be positive");
  if (!(thrust_coeffs.array() > 0.0).all())
    throw std::invalid_argument("thrust coefficients must be positive");

  const double duration = model.trajectory().duration();
  SensorLog log;
  log.mass = mass;
  log.thrust_coeffs = thrust_coeffs;
  log.noise = noise;
  log.camera = camera;

  auto rng_imu = make_rng(noise.seed, 1);
  auto rng_bias = make_rng(noise.seed, 2);
  auto rng_rotor = make_rng(noise.seed, 3);
  auto rng_field = make_rng(noise.seed, 4);
  auto rng_pixel = make_rng(noise.seed, 5);

  // IMU stream with bias random walk.
  const auto imu_t = uniform_times(duration, noise.imu_hz);
  std::vector<TruthModel::State> imu_states;
  imu_states.reserve(imu_t.size());
  std::vector<Vec3> ba(imu_t.size()), bw(imu_t.size());
  Vec3 cur_ba = Vec3::Zero(), cur_bw = Vec3::Zero();
  for (std::size_t i = 0; i < imu_t.size(); ++i) {
    if (i > 0) {
      const double dt = imu_t[i] - imu_t[i - 1];
      cur_ba += gaussian3(rng_bias, noise.sigma_ba * std::sqrt(dt));
      cur_bw += gaussian3(rng_bias, noise.sigma_bw * std::sqrt(dt));
    }
    ba[i] = cur_ba;
    bw[i] = cur_bw;
    const auto s = model.eval(imu_t[i]);
    imu_states.push_back(s);
    ImuSample m;
    m.t = imu_t[i];
    m.accel = s.R.transpose() * (s.a - kGravity) + cur_ba + gaussian3(rng_imu, noise.sigma_a);
    m.gyro = s.omega_b + cur_bw + gaussian3(rng_imu, noise.sigma_w);
    log.imu.push_back(m);
  }

  // Rotor speeds: thrust noise is injected along body z, then mapped to speeds.
  std::normal_distribution<double> unit(0.0, 1.0);
  for (double t : uniform_times(duration, noise.rmu_hz)) {
    const auto s = model.eval(t);
    const double thrust = s.thrust + noise.sigma_T * unit(rng_rotor);
    log.rotor.push_back({t, rotor_speeds_for_thrust(thrust, thrust_coeffs, mass)});
  }

  // Truth at the union of IMU and camera instants; biases interpolated.
  const auto cam_t = uniform_times(duration, noise.cam_hz);
  auto bias_at = [&](double t, const std::vector<Vec3>& b) {
    const double x = t * noise.imu_hz;
    auto i = static_cast<std::size_t>(std::floor(x + 1e-9));
    if (i + 1 >= b.size()) return b.back();
    const double w = std::clamp(x - static_cast<double>(i), 0.0, 1.0);
    return Vec3((1.0 - w) * b[i] + w * b[i + 1]);
  };
  {
    std::vector<double> all = imu_t;
    all.insert(all.end(), cam_t.begin(), cam_t.end());
    std::sort(all.begin(), all.end());
    std::vector<double> uniq;
    for (double t : all)
      if (uniq.empty() || t - uniq.back() > 1e-7) uniq.push_back(t);
    for (double t : uniq) {
      const auto s = model.eval(t);
      GroundTruthSample g;
      g.t = t;
      g.p_w = s.p;
      g.v_w = s.v;
      g.q_wb = Quat(s.R).normalized();
      g.f_ext_b = s.f_ext_b;
      g.b_a = bias_at(t, ba);
      g.b_w = bias_at(t, bw);
      g.a_w = s.a;
      g.omega_b = s.omega_b;
      log.truth.push_back(g);
    }
  }

  // Landmark field: a box above the flight volume (the camera looks along body z).
  Vec3 lo = imu_states.front().p, hi = lo;
  for (const auto& s : imu_states) {
    lo = lo.cwiseMin(s.p);
    hi = hi.cwiseMax(s.p);
  }
  LandmarkField field;
  std::uniform_real_distribution<double> ux(lo.x() - 4.0, hi.x() + 4.0);
  std::uniform_real_distribution<double> uy(lo.y() - 4.0, hi.y() + 4.0);
  std::uniform_real_distribution<double> uz(hi.z() + 2.0, hi.z() + 6.0);
  for (int i = 0; i < options.landmark_count; ++i) {
    const double x = ux(rng_field), y = uy(rng_field), z = uz(rng_field);
    field.points.emplace_back(x, y, z);
  }
  std::vector<TruthModel::State> frames;
  frames.reserve(cam_t.size());
  for (double t : cam_t) frames.push_back(model.eval(t));
  std::uniform_real_distribution<double> uu(-0.8 * camera.max_u, 0.8 * camera.max_u);
  std::uniform_real_distribution<double> uv(-0.8 * camera.max_v, 0.8 * camera.max_v);
  std::uniform_real_distribution<double> ud(2.5, 6.0);
  for (const auto& f : frames) {
    int visible = 0;
    for (const auto& L : field.points)
      if (project(camera, f.R, f.p, L, nullptr)) ++visible;
    while (visible < options.min_visible) {
      const double u = uu(rng_field), v = uv(rng_field), d = ud(rng_field);
      field.points.push_back(f.p + f.R * (d * Vec3(u, v, 1.0)));
      ++visible;
    }
  }
  const double pix = noise.pixel_sigma / camera.focal_px;
  for (const auto& f : frames) {
    for (std::size_t id = 0; id < field.points.size(); ++id) {
      Vec2 b;
      if (!project(camera, f.R, f.p, field.points[id], &b)) continue;
      const double nu = unit(rng_pixel), nv = unit(rng_pixel);
      LandmarkObservation o;
      o.frame_t = f.t;
      o.landmark_id = static_cast<std::int64_t>(id);
      o.bearing = b + pix * Vec2(nu, nv);
      o.pixel_sigma = noise.pixel_sigma;
      log.cam.push_back(o);
    }
  }
  if (field_out) *field_out = std::move(field);
  return log;
}

}  // namespace vid
