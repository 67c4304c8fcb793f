// vid: simulate, identify, run, eval and compare from the command line.
// Exit codes: 0 success, 1 usage or input error, 2 estimator divergence.

#include "vid/dataset.hpp"
#include "vid/experiment.hpp"
#include "vid/identify.hpp"
#include "vid/log.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

namespace fs = std::filesystem;

// Leftover "--section.key value" or "--section.key=value" arguments.
std::vector<std::pair<std::string, std::string>> overrides_from(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.rfind("--", 0) != 0) throw vid::ConfigError("unexpected argument '" + a + "'");
    std::string key = a.substr(2);
    const auto eq = key.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(key.substr(0, eq), key.substr(eq + 1));
      continue;
    }
    if (i + 1 >= extras.size()) throw vid::ConfigError("missing value for '" + a + "'");
    out.emplace_back(key, extras[++i]);
  }
  return out;
}

vid::ForceReference parse_reference(const std::string& s) {
  if (s == "interval") return vid::ForceReference::interval;
  if (s == "point") return vid::ForceReference::point;
  throw vid::ConfigError("--force-reference must be interval or point");
}

void print_metrics(const vid::MetricsReport& m) { std::cout << vid::metrics_json(m); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual-inertial-dynamics estimator with external force preintegration"};
  app.require_subcommand(1);

  std::string config, out, log_dir, estimate, reference = "interval";
  std::vector<std::string> configs, modes;
  vid::HoverThresholds hover;

  auto* sim = app.add_subcommand("simulate", "Write a synthetic dataset directory");
  sim->add_option("--config", config, "Experiment config file");
  sim->add_option("--out", out, "Dataset directory")->required();
  sim->allow_extras();

  auto* ident = app.add_subcommand("identify", "Thrust coefficients from hover segments");
  ident->add_option("--log", log_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ident->add_option("--out", out, "coeffs.json path (default <log>/coeffs.json)");
  ident->add_option("--max-gyro", hover.max_gyro, "Hover gyro threshold, rad/s");
  ident->add_option("--accel-tol", hover.accel_tolerance, "Hover accel tolerance around g, m/s^2");
  ident->add_option("--min-duration", hover.min_duration, "Shortest hover segment, s");

  auto* run = app.add_subcommand("run", "Run the estimator on a dataset");
  run->add_option("--log", log_dir, "Dataset directory")->required();
  run->add_option("--config", config, "Experiment config file");
  run->add_option("--out", out, "Output directory")->required();
  run->allow_extras();

  auto* eval = app.add_subcommand("eval", "Compare estimate.csv with the dataset truth");
  eval->add_option("--estimate", estimate, "estimate.csv")->required()->check(CLI::ExistingFile);
  eval->add_option("--log", log_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", out, "metrics.json path");
  eval->add_option("--force-reference", reference, "interval (default) or point");

  auto* cmp = app.add_subcommand("compare", "Run several configs on one dataset and tabulate");
  cmp->add_option("--log", log_dir, "Dataset directory")->required();
  cmp->add_option("--config", configs, "Config file, repeatable");
  cmp->add_option("--modes", modes, "Modes applied to a single config")->delimiter(',');
  cmp->add_option("--out", out, "Output directory")->required();
  cmp->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*sim) {
      const auto cfg = vid::load_config(config, overrides_from(sim->remaining()));
      vid::cmd_simulate(cfg, out);
      std::cout << "wrote " << out << '\n';
      return 0;
    }
    if (*ident) {
      const vid::SensorLog log = vid::read_log(log_dir);
      const auto res = vid::identify_thrust(log, hover);
      if (res.n_samples == 0) {
        std::cerr << "identify: no hover segment found\n";
        return 1;
      }
      const fs::path path = out.empty() ? fs::path(log_dir) / "coeffs.json" : fs::path(out);
      vid::write_coeffs_json(path, res);
      std::printf("tau = [%.6g, %.6g, %.6g, %.6g] from %d samples in %zu segment(s)\n", res.tau[0],
                  res.tau[1], res.tau[2], res.tau[3], res.n_samples, res.segments.size());
      return 0;
    }
    if (*run) {
      const auto cfg = vid::load_config(config, overrides_from(run->remaining()));
      const auto outcome = vid::cmd_run(log_dir, cfg, out);
      std::printf("%zu estimates, final cost %.6g, %.2f s\n", outcome.result.estimates.size(),
                  outcome.result.final_cost, outcome.runtime_s);
      if (outcome.result.diverged) {
        std::cerr << "estimator diverged\n";
        return 2;
      }
      return 0;
    }
    if (*eval) {
      const auto m = vid::cmd_eval(estimate, log_dir, parse_reference(reference), out);
      print_metrics(m);
      return m.diverged ? 2 : 0;
    }
    if (*cmp) {
      const auto extra = overrides_from(cmp->remaining());
      std::vector<vid::ExperimentConfig> cfgs;
      if (!modes.empty()) {
        if (configs.size() > 1) throw vid::ConfigError("--modes takes at most one --config");
        for (const auto& mode : modes) {
          auto ov = extra;
          ov.emplace_back("experiment.mode", mode);
          cfgs.push_back(vid::load_config(configs.empty() ? "" : configs.front(), ov));
        }
      } else {
        for (const auto& c : configs) cfgs.push_back(vid::load_config(c, extra));
      }
      const auto rows = vid::cmd_compare(log_dir, cfgs, out);
      std::cout << vid::compare_markdown(rows);
      for (const auto& r : rows)
        if (!r.failed && r.metrics.diverged) return 2;
      return 0;
    }
  } catch (const vid::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
