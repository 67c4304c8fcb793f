#include "vid/dataset.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace vid {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

namespace {

const std::vector<std::string> kImuCols{"t", "ax", "ay", "az", "gx", "gy", "gz"};
const std::vector<std::string> kRotorCols{"t", "w1", "w2", "w3", "w4"};
const std::vector<std::string> kCamCols{"t", "landmark_id", "u", "v"};
const std::vector<std::string> kTruthCols{"t",   "px",  "py",  "pz",  "vx",  "vy",  "vz",
                                          "qw",  "qx",  "qy",  "qz",  "fx",  "fy",  "fz",
                                          "bax", "bay", "baz", "bgx", "bgy", "bgz"};

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << '\n';
  }
  CsvWriter& operator<<(double x) {
    sep();
    out_ << format_real(x);
    return *this;
  }
  CsvWriter& integer(std::int64_t x) {
    sep();
    out_ << x;
    return *this;
  }
  CsvWriter& vec(const Eigen::Ref<const Eigen::VectorXd>& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) *this << v[i];
    return *this;
  }
  void endl() {
    out_ << '\n';
    first_ = true;
  }

 private:
  void sep() {
    if (!first_) out_ << ',';
    first_ = false;
  }
  std::ofstream out_;
  bool first_ = true;
};

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Reads a CSV file into rows of doubles ordered as `required`.
class CsvTable {
 public:
  CsvTable(const fs::path& path, const std::vector<std::string>& required) : name_(path.filename().string()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError(name_, 1, "empty file, header expected");
    strip(line);
    std::map<std::string, std::size_t> index;
    const auto cols = split(line);
    for (std::size_t i = 0; i < cols.size(); ++i) index[std::string(cols[i])] = i;
    std::vector<std::size_t> pick;
    for (const auto& c : required) {
      auto it = index.find(c);
      if (it == index.end()) throw ParseError(name_, 1, "missing column '" + c + "'");
      pick.push_back(it->second);
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      strip(line);
      if (line.empty()) continue;
      const auto fields = split(line);
      if (fields.size() != cols.size())
        throw ParseError(name_, lineno, "expected " + std::to_string(cols.size()) +
                                            " fields, found " + std::to_string(fields.size()));
      std::vector<double> row;
      row.reserve(pick.size());
      for (std::size_t k = 0; k < pick.size(); ++k) {
        const auto f = fields[pick[k]];
        double x = 0.0;
        if (f == "nan") {
          x = std::nan("");
        } else {
          const auto res = std::from_chars(f.data(), f.data() + f.size(), x);
          if (res.ec != std::errc() || res.ptr != f.data() + f.size())
            throw ParseError(name_, lineno,
                             "bad number '" + std::string(f) + "' in column '" + required[k] + "'");
        }
        row.push_back(x);
      }
      rows_.push_back(std::move(row));
      lines_.push_back(lineno);
    }
  }

  const std::vector<std::vector<double>>& rows() const { return rows_; }

  void require_increasing(bool strict) const {
    for (std::size_t i = 1; i < rows_.size(); ++i) {
      const bool bad = strict ? !(rows_[i][0] > rows_[i - 1][0]) : rows_[i][0] < rows_[i - 1][0];
      if (bad)
        throw ValidationError(name_ + ":" + std::to_string(lines_[i]) +
                              ": timestamps out of order");
    }
  }

 private:
  static void strip(std::string& s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  }
  std::string name_;
  std::vector<std::vector<double>> rows_;
  std::vector<std::size_t> lines_;
};

json noise_to_json(const NoiseConfig& n) {
  return json{{"sigma_a", n.sigma_a},   {"sigma_w", n.sigma_w},   {"sigma_T", n.sigma_T},
              {"sigma_ba", n.sigma_ba}, {"sigma_bw", n.sigma_bw}, {"pixel_sigma", n.pixel_sigma},
              {"imu_hz", n.imu_hz},     {"rmu_hz", n.rmu_hz},     {"cam_hz", n.cam_hz},
              {"seed", n.seed}};
}

NoiseConfig noise_from_json(const json& j) {
  NoiseConfig n;
  n.sigma_a = j.at("sigma_a").get<double>();
  n.sigma_w = j.at("sigma_w").get<double>();
  n.sigma_T = j.at("sigma_T").get<double>();
  n.sigma_ba = j.at("sigma_ba").get<double>();
  n.sigma_bw = j.at("sigma_bw").get<double>();
  n.pixel_sigma = j.value("pixel_sigma", 1.0);
  n.imu_hz = j.at("imu_hz").get<double>();
  n.rmu_hz = j.at("rmu_hz").get<double>();
  n.cam_hz = j.at("cam_hz").get<double>();
  n.seed = j.at("seed").get<std::uint64_t>();
  return n;
}

}  // namespace

void write_log(const fs::path& dir, const SensorLog& log) {
  fs::create_directories(dir);
  {
    CsvWriter w(dir / "imu.csv", kImuCols);
    for (const auto& s : log.imu) {
      w << s.t;
      w.vec(s.accel).vec(s.gyro).endl();
    }
  }
  {
    CsvWriter w(dir / "rotor.csv", kRotorCols);
    for (const auto& s : log.rotor) {
      w << s.t;
      w.vec(s.omega_rotor).endl();
    }
  }
  {
    CsvWriter w(dir / "cam.csv", kCamCols);
    for (const auto& o : log.cam) {
      w << o.frame_t;
      w.integer(o.landmark_id).vec(o.bearing).endl();
    }
  }
  {
    CsvWriter w(dir / "truth.csv", kTruthCols);
    for (const auto& g : log.truth) {
      w << g.t;
      w.vec(g.p_w).vec(g.v_w);
      w << g.q_wb.w() << g.q_wb.x() << g.q_wb.y() << g.q_wb.z();
      w.vec(g.f_ext_b).vec(g.b_a).vec(g.b_w).endl();
    }
  }
  json meta{{"mass", log.mass},
            {"thrust_coeffs", {log.thrust_coeffs[0], log.thrust_coeffs[1], log.thrust_coeffs[2],
                               log.thrust_coeffs[3]}},
            {"gravity", {log.gravity.x(), log.gravity.y(), log.gravity.z()}},
            {"noise", noise_to_json(log.noise)},
            {"seed", log.noise.seed},
            {"camera",
             {{"focal_px", log.camera.focal_px},
              {"max_u", log.camera.max_u},
              {"max_v", log.camera.max_v},
              {"min_depth", log.camera.min_depth}}}};
  std::ofstream out(dir / "meta.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << '\n';
}

SensorLog read_log(const fs::path& dir) {
  std::string missing;
  for (const char* f : {"imu.csv", "rotor.csv", "cam.csv", "truth.csv", "meta.json"})
    if (!fs::exists(dir / f)) missing += std::string(missing.empty() ? "" : ", ") + f;
  if (!missing.empty())
    throw std::runtime_error("dataset " + dir.string() + " is missing: " + missing);

  SensorLog log;
  {
    std::ifstream in(dir / "meta.json");
    json meta;
    try {
      meta = json::parse(in);
      log.mass = meta.at("mass").get<double>();
      const auto c = meta.at("thrust_coeffs");
      for (int i = 0; i < 4; ++i) log.thrust_coeffs[i] = c.at(i).get<double>();
      const auto g = meta.at("gravity");
      log.gravity = Vec3(g.at(0).get<double>(), g.at(1).get<double>(), g.at(2).get<double>());
      log.noise = noise_from_json(meta.at("noise"));
      if (meta.contains("camera")) {
        const auto& cam = meta["camera"];
        log.camera.focal_px = cam.value("focal_px", log.camera.focal_px);
        log.camera.max_u = cam.value("max_u", log.camera.max_u);
        log.camera.max_v = cam.value("max_v", log.camera.max_v);
        log.camera.min_depth = cam.value("min_depth", log.camera.min_depth);
      }
    } catch (const json::exception& e) {
      throw ParseError("meta.json", 1, e.what());
    }
  }
  {
    CsvTable t(dir / "imu.csv", kImuCols);
    t.require_increasing(true);
    for (const auto& r : t.rows())
      log.imu.push_back({r[0], Vec3(r[1], r[2], r[3]), Vec3(r[4], r[5], r[6])});
  }
  {
    CsvTable t(dir / "rotor.csv", kRotorCols);
    t.require_increasing(true);
    for (const auto& r : t.rows()) log.rotor.push_back({r[0], Vec4(r[1], r[2], r[3], r[4])});
  }
  {
    CsvTable t(dir / "cam.csv", kCamCols);
    t.require_increasing(false);
    for (const auto& r : t.rows()) {
      LandmarkObservation o;
      o.frame_t = r[0];
      o.landmark_id = static_cast<std::int64_t>(std::llround(r[1]));
      o.bearing = Vec2(r[2], r[3]);
      o.pixel_sigma = log.noise.pixel_sigma;
      log.cam.push_back(o);
    }
  }
  {
    CsvTable t(dir / "truth.csv", kTruthCols);
    t.require_increasing(true);
    for (const auto& r : t.rows()) {
      GroundTruthSample g;
      g.t = r[0];
      g.p_w = Vec3(r[1], r[2], r[3]);
      g.v_w = Vec3(r[4], r[5], r[6]);
      g.q_wb = Quat(r[7], r[8], r[9], r[10]).normalized();
      g.f_ext_b = Vec3(r[11], r[12], r[13]);
      g.b_a = Vec3(r[14], r[15], r[16]);
      g.b_w = Vec3(r[17], r[18], r[19]);
      log.truth.push_back(g);
    }
  }
  return log;
}

}  // namespace vid
