#pragma once

#include "vid/estimator.hpp"
#include "vid/identify.hpp"
#include "vid/simworld.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace vid {

/// Bad config text, unknown key or unparsable value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EstimatorMode { proposed, vimo_mode, vio_only };

EstimatorMode parse_mode(const std::string& name);
std::string to_string(EstimatorMode mode);

/// How estimated forces (interval averages) are compared with the truth stream.
enum class ForceReference { interval, point };

struct ExperimentConfig {
  TrajectoryKind trajectory = TrajectoryKind::circle;
  double duration = 30.0;
  TrajectoryParams trajectory_params;
  ForceProfile force;
  double mass = 1.0;
  Vec4 thrust_coeffs = Vec4::Constant(2.0e-6);
  NoiseConfig noise;
  SynthesisOptions synthesis;
  RunOptions run;
  EstimatorMode mode = EstimatorMode::proposed;
  ForceReference force_reference = ForceReference::interval;
  std::string name;  // label in comparison tables; defaults to the mode

  /// Sets one "section.key" entry. Throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Resolves mode into the solver switches and checks every sub-config.
  void finalize();
  std::string label() const { return name.empty() ? to_string(mode) : name; }
};

/// Parses "key = value" lines grouped under "[section]" headers into
/// "section.key" entries. '#' and ';' start comments.
std::map<std::string, std::string> parse_config_text(const std::string& text);

/// Defaults, then the file (if non-empty), then the overrides in order.
ExperimentConfig load_config(const std::filesystem::path& file,
                             const std::vector<std::pair<std::string, std::string>>& overrides = {});

struct MetricsReport {
  double trans_rmse = 0.0;     // m
  double rot_rmse_deg = 0.0;
  bool has_force = false;
  Vec3 force_rmse_axis = Vec3::Zero();  // m/s^2
  double force_rmse_norm = 0.0;         // m/s^2, norm of the error vector
  double force_rmse_newton = 0.0;       // N, given the vehicle mass
  int aligned = 0;
  bool diverged = false;
  double runtime_s = 0.0;
};

/// Aligns each estimate to the nearest truth sample within 1 ms. Throws
/// std::runtime_error when nothing aligns.
MetricsReport evaluate(const RunResult& estimate, const std::vector<GroundTruthSample>& truth,
                       double mass, ForceReference ref = ForceReference::interval);

SensorLog simulate(const ExperimentConfig& cfg);

/// Writes the dataset directory. Deterministic under the noise seed.
void cmd_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

struct RunOutcome {
  RunResult result;
  double runtime_s = 0.0;
};

/// Runs the estimator on a dataset directory and writes estimate.csv,
/// report.json and timing.json into out_dir. Throws std::runtime_error listing
/// missing dataset files.
RunOutcome cmd_run(const std::filesystem::path& dataset, const ExperimentConfig& cfg,
                   const std::filesystem::path& out_dir);

/// Reads estimate.csv and the dataset truth; writes metrics.json when out is non-empty.
MetricsReport cmd_eval(const std::filesystem::path& estimate_csv,
                       const std::filesystem::path& dataset, ForceReference ref,
                       const std::filesystem::path& out = {});

struct CompareRow {
  std::string label;
  bool failed = false;
  std::string error;
  MetricsReport metrics;
};

/// One row per config. A failing run marks its row and the table is still
/// written (compare.csv and compare.md under out_dir).
std::vector<CompareRow> cmd_compare(const std::filesystem::path& dataset,
                                    const std::vector<ExperimentConfig>& configs,
                                    const std::filesystem::path& out_dir);

std::string metrics_json(const MetricsReport& m);
std::string compare_markdown(const std::vector<CompareRow>& rows);
std::string compare_csv(const std::vector<CompareRow>& rows);

}  // namespace vid
