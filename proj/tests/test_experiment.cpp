#include "vid/dataset.hpp"
#include "vid/experiment.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace vid;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vid_test_experiment_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig short_config(const std::string& mode, double duration = 3.0) {
  return load_config({}, {{"experiment.mode", mode},
                          {"scenario.duration", std::to_string(duration)},
                          {"scenario.z_amplitude", "0.5"},
                          {"scenario.follow_heading", "false"},
                          {"scenario.force", "constant_payload"},
                          {"scenario.payload", "0,0,-2"}});
}

std::vector<GroundTruthSample> truth_line(int n) {
  std::vector<GroundTruthSample> truth;
  for (int i = 0; i < n; ++i) {
    GroundTruthSample g;
    g.t = 0.1 * i;
    g.p_w = Vec3(0.3 * i, -0.1 * i, 1.0);
    g.q_wb = Quat(Eigen::AngleAxisd(0.05 * i, Vec3::UnitZ()));
    g.f_ext_b = Vec3(0, 0, 2);
    truth.push_back(g);
  }
  return truth;
}

RunResult from_truth(const std::vector<GroundTruthSample>& truth) {
  RunResult r;
  for (const auto& g : truth) {
    NavState x;
    x.t = g.t;
    x.p = g.p_w;
    x.q = g.q_wb;
    x.f_ext = g.f_ext_b;
    r.estimates.push_back(x);
  }
  return r;
}

}  // namespace

TEST(Experiment, ParsesSectionsAndComments) {
  const auto kv = parse_config_text(
      "# comment\n[scenario]\nradius = 3.5 ; trailing\n\n[solver]\n  window_size=8\n");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv.at("scenario.radius"), "3.5");
  EXPECT_EQ(kv.at("solver.window_size"), "8");
  EXPECT_THROW(parse_config_text("[broken\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[a]\njust words\n"), ConfigError);
}

TEST(Experiment, ConfigFileThenOverrides) {
  const fs::path dir = scratch("config");
  std::ofstream(dir / "c.ini") << "[experiment]\nmode = vio_only\n[scenario]\nradius = 3.5\nduration = 12\n";
  const auto cfg = load_config(dir / "c.ini", {{"scenario.duration", "7"}});
  EXPECT_EQ(cfg.mode, EstimatorMode::vio_only);
  EXPECT_DOUBLE_EQ(cfg.trajectory_params.radius, 3.5);
  EXPECT_DOUBLE_EQ(cfg.duration, 7.0);
  EXPECT_EQ(cfg.label(), "vio_only");
}

TEST(Experiment, ConfigErrors) {
  ExperimentConfig c;
  EXPECT_THROW(c.set("solver.windowsize", "3"), ConfigError);
  EXPECT_THROW(c.set("scenario.radius", "big"), ConfigError);
  EXPECT_THROW(c.set("scenario.payload", "1,2"), ConfigError);
  EXPECT_THROW(c.set("experiment.mode", "magic"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/vid.ini"), ConfigError);
  EXPECT_THROW(load_config({}, {{"vehicle.mass", "0"}}), ConfigError);
  EXPECT_THROW(load_config({}, {{"solver.window_size", "1"}}), ConfigError);
  EXPECT_EQ(parse_mode(to_string(EstimatorMode::vimo_mode)), EstimatorMode::vimo_mode);
}

TEST(Experiment, EvaluateIdentityIsZero) {
  const auto truth = truth_line(20);
  const MetricsReport m = evaluate(from_truth(truth), truth, 1.0, ForceReference::point);
  EXPECT_EQ(m.aligned, 20);
  EXPECT_NEAR(m.trans_rmse, 0.0, 1e-12);
  EXPECT_NEAR(m.rot_rmse_deg, 0.0, 1e-5);
  EXPECT_TRUE(m.has_force);
  EXPECT_NEAR(m.force_rmse_norm, 0.0, 1e-12);
}

TEST(Experiment, EvaluateConstantOffset) {
  const auto truth = truth_line(20);
  RunResult est = from_truth(truth);
  for (auto& x : est.estimates) {
    x.p.z() += 0.1;
    x.f_ext.setZero();
  }
  const MetricsReport m = evaluate(est, truth, 1.5, ForceReference::point);
  EXPECT_NEAR(m.trans_rmse, 0.1, 1e-12);
  EXPECT_NEAR(m.force_rmse_norm, 2.0, 1e-12);
  EXPECT_NEAR(m.force_rmse_axis.z(), 2.0, 1e-12);
  EXPECT_NEAR(m.force_rmse_axis.x(), 0.0, 1e-12);
  EXPECT_NEAR(m.force_rmse_newton, 3.0, 1e-12);

  // interval averaging of a constant force changes nothing
  const MetricsReport mi = evaluate(est, truth, 1.5, ForceReference::interval);
  EXPECT_NEAR(mi.force_rmse_norm, 2.0, 1e-12);
}

TEST(Experiment, EvaluateIsOrderInvariant) {
  const auto truth = truth_line(30);
  RunResult est = from_truth(truth);
  for (std::size_t i = 0; i < est.estimates.size(); ++i) est.estimates[i].p.x() += 0.01 * (i % 7);
  const MetricsReport a = evaluate(est, truth, 1.0);
  std::reverse(est.estimates.begin(), est.estimates.end());
  auto shuffled = truth;
  std::rotate(shuffled.begin(), shuffled.begin() + 11, shuffled.end());
  const MetricsReport b = evaluate(est, shuffled, 1.0);
  EXPECT_DOUBLE_EQ(a.trans_rmse, b.trans_rmse);
  EXPECT_DOUBLE_EQ(a.force_rmse_norm, b.force_rmse_norm);
}

TEST(Experiment, EvaluateWithoutOverlapThrows) {
  const auto truth = truth_line(10);
  RunResult est = from_truth(truth);
  for (auto& x : est.estimates) x.t += 100.0;
  EXPECT_THROW(evaluate(est, truth, 1.0), std::runtime_error);
}

TEST(Experiment, SimulateIsByteDeterministic) {
  const auto cfg = short_config("proposed", 2.0);
  const fs::path a = scratch("sim_a"), b = scratch("sim_b");
  cmd_simulate(cfg, a);
  cmd_simulate(cfg, b);
  for (const char* f : {"imu.csv", "rotor.csv", "cam.csv", "truth.csv", "meta.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

TEST(Experiment, InfeasibleScenarioNamesConstraint) {
  const auto cfg = load_config({}, {{"scenario.trajectory", "hover"},
                                    {"scenario.duration", "1"},
                                    {"scenario.force", "constant_payload"},
                                    {"scenario.payload", "0,0,12"}});
  try {
    cmd_simulate(cfg, scratch("infeasible"));
    FAIL() << "expected InfeasibleTrajectory";
  } catch (const InfeasibleTrajectory& e) {
    EXPECT_NE(std::string(e.what()).find("thrust"), std::string::npos) << e.what();
  }
}

TEST(Experiment, RopeForceOnlyWhenTaut) {
  const auto cfg = load_config({}, {{"scenario.duration", "10"},
                                    {"scenario.force", "elastic_rope"},
                                    {"scenario.anchor", "1.5,0,-4"},
                                    {"scenario.stiffness", "1"},
                                    {"scenario.rest_length", "6"}});
  const SensorLog log = simulate(cfg);
  int taut = 0, slack = 0;
  for (const auto& g : log.truth) {
    const double len = (g.p_w - cfg.force.anchor).norm();
    if (len > cfg.force.rest_length) {
      ++taut;
      EXPECT_NEAR(g.f_ext_b.norm(), cfg.force.stiffness * (len - cfg.force.rest_length) / cfg.mass, 1e-9);
    } else {
      ++slack;
      EXPECT_EQ(g.f_ext_b, Vec3::Zero());
    }
  }
  EXPECT_GT(taut, 0);
  EXPECT_GT(slack, 0);
}

TEST(Experiment, RunListsMissingFiles) {
  const fs::path ds = scratch("missing");
  std::ofstream(ds / "imu.csv") << "t\n";
  try {
    cmd_run(ds, short_config("proposed"), scratch("missing_out"));
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    for (const char* f : {"rotor.csv", "cam.csv", "truth.csv", "meta.json"})
      EXPECT_NE(msg.find(f), std::string::npos) << msg;
    EXPECT_EQ(msg.find("imu.csv"), std::string::npos) << msg;
  }
}

TEST(Experiment, VioOnlyWritesNanForce) {
  const fs::path ds = scratch("vio_ds"), out = scratch("vio_out");
  const auto cfg = short_config("vio_only");
  cmd_simulate(cfg, ds);
  const RunOutcome r = cmd_run(ds, cfg, out);
  EXPECT_FALSE(r.result.has_force);
  ASSERT_TRUE(fs::exists(out / "estimate.csv"));
  ASSERT_TRUE(fs::exists(out / "report.json"));
  ASSERT_TRUE(fs::exists(out / "timing.json"));
  const RunResult back = read_estimate_csv((out / "estimate.csv").string());
  ASSERT_FALSE(back.estimates.empty());
  for (const auto& x : back.estimates) EXPECT_TRUE(x.f_ext.array().isNaN().all());
  const MetricsReport m = cmd_eval(out / "estimate.csv", ds, ForceReference::interval, out / "metrics.json");
  EXPECT_FALSE(m.has_force);
  EXPECT_NE(slurp(out / "metrics.json").find("\"force_rmse\": null"), std::string::npos);
}

TEST(Experiment, NoiselessHoverFinalCostNearZero) {
  const auto cfg = load_config({}, {{"scenario.trajectory", "hover"},
                                    {"scenario.duration", "3"},
                                    {"noise.preset", "noiseless"},
                                    {"init.vel_sigma", "0"},
                                    {"init.ba_sigma", "0"},
                                    {"init.bw_sigma", "0"}});
  const fs::path ds = scratch("hover_ds");
  cmd_simulate(cfg, ds);
  const RunOutcome r = cmd_run(ds, cfg, scratch("hover_out"));
  EXPECT_FALSE(r.result.diverged);
  EXPECT_LT(r.result.final_cost, 1e-8);
}

TEST(Experiment, CompareNeedsTwoConfigs) {
  EXPECT_THROW(cmd_compare(scratch("cmp_one"), {short_config("proposed")}, scratch("cmp_one_out")),
               ConfigError);
}

TEST(Experiment, CompareKeepsFailedRows) {
  const fs::path ds = scratch("cmp_ds"), out = scratch("cmp_out");
  cmd_simulate(short_config("proposed", 2.0), ds);
  std::vector<ExperimentConfig> cfgs = {short_config("proposed", 2.0), short_config("vio_only", 2.0)};
  // a dataset without truth makes every run fail; the tables must still appear
  const fs::path broken = scratch("cmp_broken");
  fs::copy(ds, broken, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  fs::remove(broken / "truth.csv");
  const auto bad = cmd_compare(broken, cfgs, out / "bad");
  ASSERT_EQ(bad.size(), 2u);
  EXPECT_TRUE(bad[0].failed);
  EXPECT_TRUE(fs::exists(out / "bad" / "compare.csv"));
  EXPECT_TRUE(fs::exists(out / "bad" / "compare.md"));

  const auto good = cmd_compare(ds, cfgs, out / "good");
  ASSERT_EQ(good.size(), 2u);
  EXPECT_FALSE(good[0].failed) << good[0].error;
  EXPECT_FALSE(good[1].failed) << good[1].error;
  EXPECT_TRUE(good[0].metrics.has_force);
  EXPECT_FALSE(good[1].metrics.has_force);
  const std::string md = slurp(out / "good" / "compare.md");
  EXPECT_NE(md.find("proposed"), std::string::npos);
  EXPECT_NE(md.find("vio_only"), std::string::npos);
}
