#pragma once

#include "vid/factors.hpp"
#include "vid/preintegration.hpp"
#include "vid/types.hpp"

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace vid {

struct SolverConfig {
  int max_iterations = 15;
  double initial_damping = 1e-4;
  double tolerance = 1e-6;      // relative cost decrease
  int window_size = 10;         // n; the window holds up to n + 1 states
  double huber = 1.0;           // pixels
  bool use_dynamics = true;     // false: plain visual-inertial estimator
  bool vimo_mode = false;
  double vimo_force_sigma = 0.005;
  int force_index = 0;          // 0: interval force lives in x_k, 1: in x_k+1
  double anchor_sigma = 1e-4;   // pose prior on the first state
  double prior_vel_sigma = 1.0;  // initial-state velocity and bias priors
  double prior_ba_sigma = 0.5;
  double prior_bw_sigma = 0.05;
  double min_parallax = 0.005;  // rad; below it a feature starts at default_depth
  double default_depth = 5.0;   // m
  int max_features = 40;        // per keyframe; tracked features first, 0 keeps all
  double repropagate_ba = 0.05;
  double repropagate_bw = 0.005;
  double divergence_speed = 50.0;  // m/s; any window velocity above it reports divergence

  void validate() const;
  DynamicsOptions dynamics_options() const;
};

struct FeatureTrack {
  std::int64_t id = 0;
  std::vector<std::pair<double, Vec2>> obs;  // (frame time, bearing); front is the anchor
  double lambda = 0.0;
  bool triangulated = false;
};

struct OptimizeReport {
  int iterations = 0;
  std::vector<double> costs;  // initial cost then one entry per accepted step
  bool converged = false;
  bool diverged = false;
  double final_cost = 0.0;
};

/// Eliminates the first `n_marg` variables of the quadratic
/// c + 2 b^T d + d^T H d and returns the square-root form (S, e0) over the
/// rest, with S^T S = H* and S^T e0 = b*. Small or negative pivots below
/// 1e-10 are dropped from the inverse.
struct SqrtPrior {
  MatX S;
  VecX e0;
};
SqrtPrior schur_marginalize(const MatX& H, const VecX& b, int n_marg);

/// Mid-point triangulation of two bearing rays. Returns the depth along the
/// first ray's z axis, or a non-positive value when the rays diverge.
double triangulate_midpoint(const NavState& a, const Vec2& ua, const NavState& b, const Vec2& ub);

/// Fixed-lag smoother over keyframes with inertial, dynamics, visual and
/// prior factors.
class SlidingWindow {
 public:
  explicit SlidingWindow(SolverConfig config, NoiseConfig weight_noise = {},
                         CameraModel camera = {});

  /// Starts the window. With `anchor`, a tight pose prior fixes the gauge and
  /// the initial velocity and biases get priors at their given values.
  void initialize(const NavState& x0, const std::vector<LandmarkObservation>& obs,
                  bool anchor = true);
  void add_keyframe(NavState guess, DynPreintegration dyn, ImuPreintegration imu,
                    const std::vector<LandmarkObservation>& obs);
  OptimizeReport optimize();
  /// Removes the oldest state into the prior and returns it.
  NavState marginalize();

  double cost() const;
  std::size_t size() const { return states_.size(); }
  bool full() const { return static_cast<int>(states_.size()) > config_.window_size; }

  const std::deque<NavState>& states() const { return states_; }
  std::deque<NavState>& mutable_states() { return states_; }
  const std::map<std::int64_t, FeatureTrack>& features() const { return features_; }
  std::map<std::int64_t, FeatureTrack>& mutable_features() { return features_; }
  const MarginalizationPrior& prior() const { return prior_; }
  void set_prior(MarginalizationPrior p);
  const SolverConfig& config() const { return config_; }
  const DynPreintegration& dyn_block(std::size_t k) const { return intervals_.at(k).dyn; }
  const ImuPreintegration& imu_block(std::size_t k) const { return intervals_.at(k).imu; }
  std::size_t interval_count() const { return intervals_.size(); }

 private:
  struct Interval {
    DynPreintegration dyn;
    ImuPreintegration imu;
    Mat12 U_dyn;
    Mat15 U_imu;
  };
  struct System;

  void refresh_weights(Interval& iv) const;
  void repropagate_if_needed();
  void triangulate_pending();
  int index_of(double t) const;
  VisualOptions visual_options() const;
  bool feature_active(const FeatureTrack& f) const;
  void build(System& sys, bool marg_only) const;
  double evaluate_cost(const std::deque<NavState>& states,
                       const std::map<std::int64_t, FeatureTrack>& features) const;
  void reanchor_after_removal(const NavState& removed);
  void cache_prior();
  std::vector<LandmarkObservation> select_observations(
      const std::vector<LandmarkObservation>& obs) const;
  /// Prior cost, gradient J^T r and Gauss-Newton Hessian J^T J over the
  /// prior's states, from the cached quadratic form.
  double prior_terms(const std::deque<NavState>& states, VecX* grad, MatX* hess,
                     std::vector<int>* idx) const;

  SolverConfig config_;
  NoiseConfig weight_noise_;
  CameraModel camera_;
  std::deque<NavState> states_;
  std::deque<Interval> intervals_;
  std::map<std::int64_t, FeatureTrack> features_;
  MarginalizationPrior prior_;
  MatX prior_H0_;  // S^T S
  VecX prior_b0_;  // S^T e0
  double prior_c0_ = 0.0;
};

struct RunOptions {
  SolverConfig solver;
  NoiseConfig weight_noise;  // nominal model used for weighting
  double init_vel_sigma = 0.05;
  double init_ba_sigma = 0.005;
  double init_bw_sigma = 0.0005;
  std::uint64_t init_seed = 7;
  bool bootstrap_full_window = true;  // first optimization once the window holds n+1 states
};

struct KeyframeRecord {
  double t = 0.0;
  int iterations = 0;
  std::vector<double> costs;
  bool converged = false;
};

struct RunResult {
  std::vector<NavState> estimates;  // one per keyframe, ascending time
  bool has_force = true;
  bool diverged = false;
  double final_cost = 0.0;
  std::vector<KeyframeRecord> records;
};

/// Processes the log keyframe by keyframe at camera rate. Needs ground truth
/// for the initial state.
RunResult run_batch(const SensorLog& log, const RunOptions& options);

/// estimate.csv: t, px..pz, vx..vz, qw..qz, bax..baz, bgx..bgz, fx..fz.
void write_estimate_csv(const std::string& path, const RunResult& result);
RunResult read_estimate_csv(const std::string& path);

}  // namespace vid
