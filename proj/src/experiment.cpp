#include "vid/experiment.hpp"

#include "vid/dataset.hpp"
#include "vid/log.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace vid {

namespace fs = std::filesystem;
using nlohmann::json;

EstimatorMode parse_mode(const std::string& name) {
  if (name == "proposed") return EstimatorMode::proposed;
  if (name == "vimo_mode" || name == "vimo") return EstimatorMode::vimo_mode;
  if (name == "vio_only" || name == "vio") return EstimatorMode::vio_only;
  throw ConfigError("unknown mode '" + name + "' (proposed, vimo_mode, vio_only)");
}

std::string to_string(EstimatorMode mode) {
  switch (mode) {
    case EstimatorMode::proposed: return "proposed";
    case EstimatorMode::vimo_mode: return "vimo_mode";
    case EstimatorMode::vio_only: return "vio_only";
  }
  return "unknown";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (trim(v.substr(used)).empty() && std::isfinite(x)) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

long long to_integer(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (trim(v.substr(used)).empty()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected an integer, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<double> to_reals(const std::string& key, const std::string& v, char sep = ',') {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(to_real(key, trim(cell)));
  return out;
}

Vec3 to_vec3(const std::string& key, const std::string& v) {
  const auto x = to_reals(key, v);
  if (x.size() != 3) throw ConfigError(key + ": expected 3 comma-separated numbers");
  return Vec3(x[0], x[1], x[2]);
}

Vec4 to_vec4(const std::string& key, const std::string& v) {
  const auto x = to_reals(key, v);
  if (x.size() != 4) throw ConfigError(key + ": expected 4 comma-separated numbers");
  return Vec4(x[0], x[1], x[2], x[3]);
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> m;
    auto R = [&](const std::string& k, std::function<double&(ExperimentConfig&)> f) {
      m[k] = [f](ExperimentConfig& c, const std::string& key, const std::string& v) {
        f(c) = to_real(key, v);
      };
    };
    auto I = [&](const std::string& k, std::function<int&(ExperimentConfig&)> f) {
      m[k] = [f](ExperimentConfig& c, const std::string& key, const std::string& v) {
        f(c) = static_cast<int>(to_integer(key, v));
      };
    };
    auto U = [&](const std::string& k, std::function<std::uint64_t&(ExperimentConfig&)> f) {
      m[k] = [f](ExperimentConfig& c, const std::string& key, const std::string& v) {
        const long long x = to_integer(key, v);
        if (x < 0) throw ConfigError(key + ": must be non-negative");
        f(c) = static_cast<std::uint64_t>(x);
      };
    };
    auto B = [&](const std::string& k, std::function<bool&(ExperimentConfig&)> f) {
      m[k] = [f](ExperimentConfig& c, const std::string& key, const std::string& v) {
        f(c) = to_bool(key, v);
      };
    };
    auto V3 = [&](const std::string& k, std::function<Vec3&(ExperimentConfig&)> f) {
      m[k] = [f](ExperimentConfig& c, const std::string& key, const std::string& v) {
        f(c) = to_vec3(key, v);
      };
    };

    m["experiment.mode"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
      c.mode = parse_mode(v);
    };
    m["experiment.name"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
      c.name = v;
    };

    m["scenario.trajectory"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      try {
        c.trajectory = parse_trajectory_kind(v);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(key + ": " + e.what());
      }
    };
    R("scenario.duration", [](ExperimentConfig& c) -> double& { return c.duration; });
    V3("scenario.center", [](ExperimentConfig& c) -> Vec3& { return c.trajectory_params.center; });
    R("scenario.radius", [](ExperimentConfig& c) -> double& { return c.trajectory_params.radius; });
    R("scenario.period", [](ExperimentConfig& c) -> double& { return c.trajectory_params.period; });
    R("scenario.z_amplitude", [](ExperimentConfig& c) -> double& { return c.trajectory_params.z_amplitude; });
    R("scenario.yaw0", [](ExperimentConfig& c) -> double& { return c.trajectory_params.yaw0; });
    R("scenario.yaw_rate", [](ExperimentConfig& c) -> double& { return c.trajectory_params.yaw_rate; });
    B("scenario.follow_heading", [](ExperimentConfig& c) -> bool& { return c.trajectory_params.follow_heading; });
    m["scenario.waypoints"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      std::vector<Vec3> pts;
      std::stringstream ss(v);
      std::string cell;
      while (std::getline(ss, cell, ';'))
        if (!trim(cell).empty()) pts.push_back(to_vec3(key, trim(cell)));
      c.trajectory_params.waypoints = pts;
    };
    m["scenario.force"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      try {
        c.force.kind = parse_force_kind(v);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(key + ": " + e.what());
      }
    };
    V3("scenario.payload", [](ExperimentConfig& c) -> Vec3& { return c.force.payload; });
    V3("scenario.anchor", [](ExperimentConfig& c) -> Vec3& { return c.force.anchor; });
    R("scenario.stiffness", [](ExperimentConfig& c) -> double& { return c.force.stiffness; });
    R("scenario.rest_length", [](ExperimentConfig& c) -> double& { return c.force.rest_length; });
    V3("scenario.gust_direction", [](ExperimentConfig& c) -> Vec3& { return c.force.gust_direction; });
    R("scenario.gust_magnitude", [](ExperimentConfig& c) -> double& { return c.force.gust_magnitude; });
    R("scenario.gust_start", [](ExperimentConfig& c) -> double& { return c.force.gust_start; });
    R("scenario.gust_stop", [](ExperimentConfig& c) -> double& { return c.force.gust_stop; });
    R("scenario.gust_ramp", [](ExperimentConfig& c) -> double& { return c.force.gust_ramp; });
    I("scenario.landmark_count", [](ExperimentConfig& c) -> int& { return c.synthesis.landmark_count; });
    I("scenario.min_visible", [](ExperimentConfig& c) -> int& { return c.synthesis.min_visible; });

    R("vehicle.mass", [](ExperimentConfig& c) -> double& { return c.mass; });
    m["vehicle.thrust_coeffs"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.thrust_coeffs = to_vec4(key, v);
    };

    for (const std::string sec : {"noise", "weight"}) {
      auto pick = [sec](ExperimentConfig& c) -> NoiseConfig& {
        return sec == "noise" ? c.noise : c.run.weight_noise;
      };
      R(sec + ".sigma_a", [pick](ExperimentConfig& c) -> double& { return pick(c).sigma_a; });
      R(sec + ".sigma_w", [pick](ExperimentConfig& c) -> double& { return pick(c).sigma_w; });
      R(sec + ".sigma_T", [pick](ExperimentConfig& c) -> double& { return pick(c).sigma_T; });
      R(sec + ".sigma_ba", [pick](ExperimentConfig& c) -> double& { return pick(c).sigma_ba; });
      R(sec + ".sigma_bw", [pick](ExperimentConfig& c) -> double& { return pick(c).sigma_bw; });
      R(sec + ".pixel_sigma", [pick](ExperimentConfig& c) -> double& { return pick(c).pixel_sigma; });
      R(sec + ".imu_hz", [pick](ExperimentConfig& c) -> double& { return pick(c).imu_hz; });
      R(sec + ".rmu_hz", [pick](ExperimentConfig& c) -> double& { return pick(c).rmu_hz; });
      R(sec + ".cam_hz", [pick](ExperimentConfig& c) -> double& { return pick(c).cam_hz; });
    }
    U("noise.seed", [](ExperimentConfig& c) -> std::uint64_t& { return c.noise.seed; });
    m["noise.preset"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      if (v == "noiseless") {
        const NoiseConfig n = NoiseConfig::noiseless();
        c.noise.sigma_a = n.sigma_a;
        c.noise.sigma_w = n.sigma_w;
        c.noise.sigma_T = n.sigma_T;
        c.noise.sigma_ba = n.sigma_ba;
        c.noise.sigma_bw = n.sigma_bw;
        c.noise.pixel_sigma = n.pixel_sigma;
      } else if (v != "default") {
        throw ConfigError(key + ": expected default or noiseless");
      }
    };

    I("solver.max_iterations", [](ExperimentConfig& c) -> int& { return c.run.solver.max_iterations; });
    R("solver.initial_damping", [](ExperimentConfig& c) -> double& { return c.run.solver.initial_damping; });
    R("solver.tolerance", [](ExperimentConfig& c) -> double& { return c.run.solver.tolerance; });
    I("solver.window_size", [](ExperimentConfig& c) -> int& { return c.run.solver.window_size; });
    R("solver.huber", [](ExperimentConfig& c) -> double& { return c.run.solver.huber; });
    R("solver.vimo_force_sigma", [](ExperimentConfig& c) -> double& { return c.run.solver.vimo_force_sigma; });
    I("solver.force_index", [](ExperimentConfig& c) -> int& { return c.run.solver.force_index; });
    R("solver.anchor_sigma", [](ExperimentConfig& c) -> double& { return c.run.solver.anchor_sigma; });
    R("solver.prior_vel_sigma", [](ExperimentConfig& c) -> double& { return c.run.solver.prior_vel_sigma; });
    R("solver.prior_ba_sigma", [](ExperimentConfig& c) -> double& { return c.run.solver.prior_ba_sigma; });
    R("solver.prior_bw_sigma", [](ExperimentConfig& c) -> double& { return c.run.solver.prior_bw_sigma; });
    R("solver.min_parallax", [](ExperimentConfig& c) -> double& { return c.run.solver.min_parallax; });
    R("solver.default_depth", [](ExperimentConfig& c) -> double& { return c.run.solver.default_depth; });
    I("solver.max_features", [](ExperimentConfig& c) -> int& { return c.run.solver.max_features; });
    R("solver.repropagate_ba", [](ExperimentConfig& c) -> double& { return c.run.solver.repropagate_ba; });
    R("solver.divergence_speed", [](ExperimentConfig& c) -> double& { return c.run.solver.divergence_speed; });
    R("solver.repropagate_bw", [](ExperimentConfig& c) -> double& { return c.run.solver.repropagate_bw; });

    R("init.vel_sigma", [](ExperimentConfig& c) -> double& { return c.run.init_vel_sigma; });
    R("init.ba_sigma", [](ExperimentConfig& c) -> double& { return c.run.init_ba_sigma; });
    R("init.bw_sigma", [](ExperimentConfig& c) -> double& { return c.run.init_bw_sigma; });
    U("init.seed", [](ExperimentConfig& c) -> std::uint64_t& { return c.run.init_seed; });
    B("init.bootstrap_full_window", [](ExperimentConfig& c) -> bool& { return c.run.bootstrap_full_window; });

    m["eval.force_reference"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      if (v == "interval") c.force_reference = ForceReference::interval;
      else if (v == "point") c.force_reference = ForceReference::point;
      else throw ConfigError(key + ": expected interval or point");
    };
    return m;
  }();
  return table;
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(*this, key, trim(value));
}

void ExperimentConfig::finalize() {
  run.solver.use_dynamics = mode != EstimatorMode::vio_only;
  run.solver.vimo_mode = mode == EstimatorMode::vimo_mode;
  if (!(duration > 0.0)) throw ConfigError("scenario.duration must be positive");
  if (!(mass > 0.0)) throw ConfigError("vehicle.mass must be positive");
  if (!(thrust_coeffs.array() > 0.0).all()) throw ConfigError("vehicle.thrust_coeffs must be positive");
  try {
    force.validate();
    noise.validate();
    run.weight_noise.validate();
    run.solver.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    out[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
  }
  return out;
}

ExperimentConfig load_config(const fs::path& file,
                             const std::vector<std::pair<std::string, std::string>>& overrides) {
  ExperimentConfig cfg;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read config " + file.string());
    std::stringstream buf;
    buf << in.rdbuf();
    for (const auto& [k, v] : parse_config_text(buf.str())) cfg.set(k, v);
  }
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  cfg.finalize();
  return cfg;
}

// ---------------------------------------------------------------------------

namespace {

const GroundTruthSample* nearest(const std::vector<GroundTruthSample>& truth, double t) {
  auto it = std::lower_bound(truth.begin(), truth.end(), t,
                             [](const GroundTruthSample& s, double x) { return s.t < x; });
  const GroundTruthSample* best = nullptr;
  if (it != truth.end()) best = &*it;
  if (it != truth.begin()) {
    const auto* prev = &*std::prev(it);
    if (!best || std::abs(prev->t - t) <= std::abs(best->t - t)) best = prev;
  }
  if (!best || std::abs(best->t - t) > 1e-3) return nullptr;
  return best;
}

// Trapezoidal mean of the truth force over [t0, t1], expressed in the body
// frame of the sample at t0.
bool interval_force(const std::vector<GroundTruthSample>& truth, const GroundTruthSample& g0,
                    double t1, Vec3* out) {
  const Mat3 R0T = g0.q_wb.toRotationMatrix().transpose();
  auto it = std::lower_bound(truth.begin(), truth.end(), g0.t,
                             [](const GroundTruthSample& s, double x) { return s.t < x; });
  Vec3 acc = Vec3::Zero();
  double w = 0.0;
  const GroundTruthSample* prev = nullptr;
  for (; it != truth.end() && it->t <= t1 + 1e-9; ++it) {
    if (prev) {
      const double dt = it->t - prev->t;
      acc += 0.5 * dt * (R0T * (prev->q_wb * prev->f_ext_b) + R0T * (it->q_wb * it->f_ext_b));
      w += dt;
    }
    prev = &*it;
  }
  if (!(w > 0.0)) return false;
  *out = acc / w;
  return true;
}

}  // namespace

MetricsReport evaluate(const RunResult& estimate, const std::vector<GroundTruthSample>& truth_in,
                       double mass, ForceReference ref) {
  MetricsReport m;
  m.diverged = estimate.diverged;
  std::vector<GroundTruthSample> truth = truth_in;
  std::stable_sort(truth.begin(), truth.end(),
                   [](const GroundTruthSample& a, const GroundTruthSample& b) { return a.t < b.t; });
  std::vector<NavState> est = estimate.estimates;
  std::stable_sort(est.begin(), est.end(), [](const NavState& a, const NavState& b) { return a.t < b.t; });

  double se = 0.0, sr = 0.0;
  Vec3 sf = Vec3::Zero();
  int nf = 0;
  for (std::size_t k = 0; k < est.size(); ++k) {
    const NavState& x = est[k];
    const GroundTruthSample* g = nearest(truth, x.t);
    if (!g) continue;
    ++m.aligned;
    se += (x.p - g->p_w).squaredNorm();
    const double a = rot_error_angle(x.q, g->q_wb) * 180.0 / M_PI;
    sr += a * a;
    if (!estimate.has_force || !x.f_ext.allFinite()) continue;
    Vec3 ft = g->f_ext_b;
    if (ref == ForceReference::interval) {
      if (k + 1 >= est.size() || !interval_force(truth, *g, est[k + 1].t, &ft)) continue;
    }
    sf += (x.f_ext - ft).cwiseAbs2();
    ++nf;
  }
  if (m.aligned == 0) throw std::runtime_error("evaluate: no estimate aligns with the truth within 1 ms");
  m.trans_rmse = std::sqrt(se / m.aligned);
  m.rot_rmse_deg = std::sqrt(sr / m.aligned);
  if (nf > 0) {
    m.has_force = true;
    m.force_rmse_axis = (sf / nf).cwiseSqrt();
    m.force_rmse_norm = std::sqrt(sf.sum() / nf);
    m.force_rmse_newton = m.force_rmse_norm * mass;
  }
  return m;
}

SensorLog simulate(const ExperimentConfig& cfg) {
  TruthModel model(Trajectory(cfg.trajectory, cfg.duration, cfg.trajectory_params), cfg.force);
  return synthesize_sensors(model, cfg.thrust_coeffs, cfg.mass, cfg.noise, CameraModel{}, cfg.synthesis);
}

void cmd_simulate(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const SensorLog log = simulate(cfg);
  write_log(out_dir, log);
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

RunOutcome cmd_run(const fs::path& dataset, const ExperimentConfig& cfg, const fs::path& out_dir) {
  std::vector<std::string> missing;
  for (const char* f : {"imu.csv", "rotor.csv", "cam.csv", "truth.csv", "meta.json"})
    if (!fs::exists(dataset / f)) missing.push_back(f);
  if (!missing.empty()) {
    std::string msg = "dataset " + dataset.string() + " is missing:";
    for (const auto& f : missing) msg += " " + f;
    throw std::runtime_error(msg);
  }
  const SensorLog log = read_log(dataset);

  RunOptions opts = cfg.run;
  opts.solver.use_dynamics = cfg.mode != EstimatorMode::vio_only;
  opts.solver.vimo_mode = cfg.mode == EstimatorMode::vimo_mode;

  RunOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  out.result = run_batch(log, opts);
  out.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(out_dir);
  write_estimate_csv((out_dir / "estimate.csv").string(), out.result);

  json report;
  report["mode"] = to_string(cfg.mode);
  report["diverged"] = out.result.diverged;
  report["final_cost"] = out.result.final_cost;
  report["n_estimates"] = out.result.estimates.size();
  json kf = json::array();
  for (const auto& r : out.result.records)
    kf.push_back({{"t", r.t}, {"iterations", r.iterations}, {"converged", r.converged}, {"costs", r.costs}});
  report["keyframes"] = kf;
  write_text(out_dir / "report.json", report.dump(1) + "\n");

  const std::size_t n = std::max<std::size_t>(out.result.records.size(), 1);
  json timing{{"runtime_s", out.runtime_s}, {"ms_per_keyframe", 1e3 * out.runtime_s / static_cast<double>(n)}};
  write_text(out_dir / "timing.json", timing.dump(1) + "\n");
  return out;
}

std::string metrics_json(const MetricsReport& m) {
  json j;
  j["trans_rmse_m"] = m.trans_rmse;
  j["rot_rmse_deg"] = m.rot_rmse_deg;
  j["aligned"] = m.aligned;
  j["diverged"] = m.diverged;
  if (m.has_force) {
    j["force_rmse"] = {{"x", m.force_rmse_axis.x()}, {"y", m.force_rmse_axis.y()},
                       {"z", m.force_rmse_axis.z()}, {"norm", m.force_rmse_norm},
                       {"norm_newton", m.force_rmse_newton}};
  } else {
    j["force_rmse"] = nullptr;
  }
  return j.dump(1) + "\n";
}

MetricsReport cmd_eval(const fs::path& estimate_csv, const fs::path& dataset, ForceReference ref,
                       const fs::path& out) {
  const RunResult est = read_estimate_csv(estimate_csv.string());
  const SensorLog log = read_log(dataset);
  MetricsReport m = evaluate(est, log.truth, log.mass, ref);
  const fs::path report = estimate_csv.parent_path() / "report.json";
  if (fs::exists(report)) {
    std::ifstream in(report);
    try {
      m.diverged = json::parse(in).value("diverged", false);
    } catch (const json::exception&) {
      log_warn("cannot read divergence flag from " + report.string());
    }
  }
  if (!out.empty()) write_text(out, metrics_json(m));
  return m;
}

// ---------------------------------------------------------------------------

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::string status(const CompareRow& r) {
  if (r.failed) return "failed";
  return r.metrics.diverged ? "diverged" : "ok";
}

}  // namespace

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::string s = "label,status,trans_rmse_m,rot_rmse_deg,force_rmse_x,force_rmse_y,force_rmse_z,force_rmse_norm,force_rmse_N\n";
  for (const auto& r : rows) {
    s += r.label + "," + status(r);
    if (r.failed) {
      s += ",,,,,,,\n";
      continue;
    }
    const auto& m = r.metrics;
    s += "," + fmt(m.trans_rmse) + "," + fmt(m.rot_rmse_deg);
    if (m.has_force) {
      s += "," + fmt(m.force_rmse_axis.x()) + "," + fmt(m.force_rmse_axis.y()) + "," +
           fmt(m.force_rmse_axis.z()) + "," + fmt(m.force_rmse_norm) + "," + fmt(m.force_rmse_newton);
    } else {
      s += ",,,,,";
    }
    s += "\n";
  }
  return s;
}

std::string compare_markdown(const std::vector<CompareRow>& rows) {
  std::string s =
      "| method | status | trans. RMSE (m) | rot. RMSE (deg) | force RMSE x / y / z (m/s^2) | force RMSE norm (m/s^2) | force RMSE (N) |\n"
      "|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    s += "| " + r.label + " | " + status(r) + " | ";
    if (r.failed) {
      s += r.error + " | | | | |\n";
      continue;
    }
    const auto& m = r.metrics;
    s += fmt(m.trans_rmse) + " | " + fmt(m.rot_rmse_deg) + " | ";
    if (m.has_force)
      s += fmt(m.force_rmse_axis.x()) + " / " + fmt(m.force_rmse_axis.y()) + " / " +
           fmt(m.force_rmse_axis.z()) + " | " + fmt(m.force_rmse_norm) + " | " + fmt(m.force_rmse_newton) + " |\n";
    else
      s += "- | - | - |\n";
  }
  return s;
}

std::vector<CompareRow> cmd_compare(const fs::path& dataset, const std::vector<ExperimentConfig>& configs,
                                    const fs::path& out_dir) {
  if (configs.size() < 2) throw ConfigError("compare needs at least two configs");
  fs::create_directories(out_dir);
  std::vector<CompareRow> rows;
  std::map<std::string, int> seen;
  for (const auto& cfg : configs) {
    CompareRow row;
    row.label = cfg.label();
    if (++seen[row.label] > 1) row.label += "_" + std::to_string(seen[row.label]);
    try {
      const auto outcome = cmd_run(dataset, cfg, out_dir / row.label);
      const SensorLog log = read_log(dataset);
      row.metrics = evaluate(outcome.result, log.truth, log.mass, cfg.force_reference);
      row.metrics.runtime_s = outcome.runtime_s;
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
      log_warn("compare: " + row.label + " failed: " + e.what());
    }
    rows.push_back(row);
  }
  write_text(out_dir / "compare.csv", compare_csv(rows));
  write_text(out_dir / "compare.md", compare_markdown(rows));
  return rows;
}

}  // namespace vid
