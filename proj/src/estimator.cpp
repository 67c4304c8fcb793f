#include "vid/estimator.hpp"

#include "vid/dataset.hpp"
#include "vid/log.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace vid {

void SolverConfig::validate() const {
  if (window_size < 2) throw std::invalid_argument("solver: window size must be at least 2");
  if (max_iterations < 1) throw std::invalid_argument("solver: max_iterations must be positive");
  if (!(initial_damping > 0.0)) throw std::invalid_argument("solver: damping must be positive");
  if (!(tolerance >= 0.0)) throw std::invalid_argument("solver: tolerance must be non-negative");
  if (!(huber > 0.0)) throw std::invalid_argument("solver: huber threshold must be positive");
  if (force_index != 0 && force_index != 1) throw std::invalid_argument("solver: force_index must be 0 or 1");
  if (vimo_mode && !(vimo_force_sigma > 0.0))
    throw std::invalid_argument("solver: vimo_force_sigma must be positive");
  if (!(anchor_sigma > 0.0)) throw std::invalid_argument("solver: anchor_sigma must be positive");
  if (!(prior_vel_sigma > 0.0) || !(prior_ba_sigma > 0.0) || !(prior_bw_sigma > 0.0))
    throw std::invalid_argument("solver: initial prior sigmas must be positive");
  if (!(default_depth > 0.0)) throw std::invalid_argument("solver: default_depth must be positive");
  if (!(divergence_speed > 0.0)) throw std::invalid_argument("solver: divergence_speed must be positive");
  if (max_features < 0) throw std::invalid_argument("solver: max_features must be >= 0");
}

DynamicsOptions SolverConfig::dynamics_options() const {
  DynamicsOptions o;
  o.force_index = force_index;
  o.vimo_mode = vimo_mode;
  o.vimo_force_sigma = vimo_force_sigma;
  return o;
}

// ---------------------------------------------------------------------------

SqrtPrior schur_marginalize(const MatX& H, const VecX& b, int n_marg) {
  const int n = static_cast<int>(H.rows());
  if (H.cols() != n || b.size() != n || n_marg < 0 || n_marg > n)
    throw std::invalid_argument("schur_marginalize: dimension mismatch");
  const int nk = n - n_marg;
  SqrtPrior out;
  if (nk == 0) {
    out.S.resize(0, 0);
    out.e0.resize(0);
    return out;
  }
  constexpr double kFloor = 1e-10;

  MatX Hs = H.bottomRightCorner(nk, nk);
  VecX bs = b.tail(nk);
  if (n_marg > 0) {
    const MatX Hmm = 0.5 * (H.topLeftCorner(n_marg, n_marg) + H.topLeftCorner(n_marg, n_marg).transpose());
    Eigen::SelfAdjointEigenSolver<MatX> es(Hmm);
    const VecX& ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (ev.size() > 0 && ev.minCoeff() < -kFloor * scale)
      log_warn("marginalization: indefinite block, eigenvalues floored at 1e-10");
    VecX inv(n_marg);
    for (int i = 0; i < n_marg; ++i) inv(i) = ev(i) > kFloor ? 1.0 / ev(i) : 0.0;
    const MatX Hmm_inv = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    const MatX Hkm = H.bottomLeftCorner(nk, n_marg);
    Hs -= Hkm * Hmm_inv * Hkm.transpose();
    bs -= Hkm * Hmm_inv * b.head(n_marg);
  }
  Hs = 0.5 * (Hs + Hs.transpose()).eval();

  // Jacobi scaling keeps the eigen threshold meaningful across units.
  VecX d(nk), dinv(nk);
  for (int i = 0; i < nk; ++i) {
    const double h = Hs(i, i);
    d(i) = h > 0.0 ? 1.0 / std::sqrt(h) : 0.0;
    dinv(i) = h > 0.0 ? std::sqrt(h) : 0.0;
  }
  const MatX Hn = d.asDiagonal() * Hs * d.asDiagonal();
  // Hn = P^T L D L^T P, so S = sqrt(D) L^T P D^-1 after undoing the scaling.
  Eigen::LDLT<MatX> ldlt(Hn);
  const VecX D = ldlt.vectorD();
  MatX LtP = MatX(ldlt.matrixU()) * (ldlt.transpositionsP() * MatX::Identity(nk, nk));
  const VecX Pdb = ldlt.transpositionsP() * (d.asDiagonal() * bs);
  const VecX y = ldlt.matrixL().solve(Pdb);
  std::vector<int> keep;
  for (int i = 0; i < nk; ++i)
    if (D(i) > kFloor) keep.push_back(i);
  const int r = static_cast<int>(keep.size());
  out.S.resize(r, nk);
  out.e0.resize(r);
  for (int k = 0; k < r; ++k) {
    const int i = keep[k];
    const double s = std::sqrt(D(i));
    out.S.row(k) = s * (LtP.row(i) * dinv.asDiagonal());
    out.e0(k) = y(i) / s;
  }
  return out;
}

double triangulate_midpoint(const NavState& a, const Vec2& ua, const NavState& b, const Vec2& ub) {
  const Vec3 d1 = a.R() * Vec3(ua.x(), ua.y(), 1.0);
  const Vec3 d2 = b.R() * Vec3(ub.x(), ub.y(), 1.0);
  // Minimize |a.p + s1 d1 - b.p - s2 d2|.
  Eigen::Matrix2d A;
  A << d1.dot(d1), -d1.dot(d2), -d1.dot(d2), d2.dot(d2);
  const Vec3 w = b.p - a.p;
  const Vec2 rhs(d1.dot(w), -d2.dot(w));
  const double det = A.determinant();
  if (std::abs(det) < 1e-12 * A.norm() * A.norm()) return -1.0;
  const Vec2 s = A.inverse() * rhs;
  if (s(0) <= 0.0 || s(1) <= 0.0) return -1.0;
  const Vec3 mid = 0.5 * (a.p + s(0) * d1 + b.p + s(1) * d2);
  return (a.R().transpose() * (mid - a.p)).z();
}

// ---------------------------------------------------------------------------

struct SlidingWindow::System {
  struct Feat {
    double Hll = 0.0;
    double bl = 0.0;
    std::vector<std::pair<int, Vec18>> Hxl;
    std::int64_t id = 0;

    void add(int idx, const Vec18& v) {
      for (auto& [i, w] : Hxl)
        if (i == idx) {
          w += v;
          return;
        }
      Hxl.emplace_back(idx, v);
    }
  };
  MatX H;
  VecX b;
  double cost = 0.0;
  std::vector<Feat> feats;
};

SlidingWindow::SlidingWindow(SolverConfig config, NoiseConfig weight_noise, CameraModel camera)
    : config_(config), weight_noise_(weight_noise), camera_(camera) {
  config_.validate();
  weight_noise_.validate();
}

VisualOptions SlidingWindow::visual_options() const {
  VisualOptions o;
  o.focal_px = camera_.focal_px;
  o.pixel_sigma = weight_noise_.pixel_sigma > 0.0 ? weight_noise_.pixel_sigma : 1.0;
  o.huber = config_.huber;
  return o;
}

int SlidingWindow::index_of(double t) const {
  for (int i = static_cast<int>(states_.size()) - 1; i >= 0; --i)
    if (std::abs(states_[i].t - t) < 1e-9) return i;
  return -1;
}

bool SlidingWindow::feature_active(const FeatureTrack& f) const {
  return f.triangulated && f.obs.size() >= 2 && f.lambda > 0.0;
}

void SlidingWindow::refresh_weights(Interval& iv) const {
  const NavState z;
  iv.U_dyn = sqrt_information(dynamics_residual(z, z, iv.dyn, config_.dynamics_options()).W);
  iv.U_imu = sqrt_information(inertial_residual(z, z, iv.imu).W);
}

std::vector<LandmarkObservation> SlidingWindow::select_observations(
    const std::vector<LandmarkObservation>& obs) const {
  const std::size_t cap = static_cast<std::size_t>(config_.max_features);
  if (cap == 0 || obs.size() <= cap) return obs;
  std::vector<LandmarkObservation> tracked, fresh;
  for (const auto& o : obs) (features_.count(o.landmark_id) ? tracked : fresh).push_back(o);
  const auto by_id = [](const LandmarkObservation& a, const LandmarkObservation& b) {
    return a.landmark_id < b.landmark_id;
  };
  std::sort(tracked.begin(), tracked.end(), by_id);
  std::sort(fresh.begin(), fresh.end(), by_id);
  tracked.resize(std::min(tracked.size(), cap));
  for (std::size_t i = 0; tracked.size() < cap && i < fresh.size(); ++i) tracked.push_back(fresh[i]);
  return tracked;
}

void SlidingWindow::initialize(const NavState& x0, const std::vector<LandmarkObservation>& obs,
                               bool anchor) {
  if (!x0.p.allFinite() || !x0.v.allFinite() || !x0.q.coeffs().allFinite())
    throw std::invalid_argument("initialize: non-finite state");
  states_.clear();
  intervals_.clear();
  features_.clear();
  prior_ = {};
  NavState x = x0;
  x.q.normalize();
  states_.push_back(x);
  if (anchor) {
    prior_.times = {x.t};
    prior_.lin = {x};
    prior_.S = MatX::Zero(15, st::kDim);
    prior_.S.block<3, 3>(0, st::kP) = Mat3::Identity() / config_.anchor_sigma;
    prior_.S.block<3, 3>(3, st::kQ) = Mat3::Identity() / config_.anchor_sigma;
    prior_.S.block<3, 3>(6, st::kV) = Mat3::Identity() / config_.prior_vel_sigma;
    prior_.S.block<3, 3>(9, st::kBa) = Mat3::Identity() / config_.prior_ba_sigma;
    prior_.S.block<3, 3>(12, st::kBw) = Mat3::Identity() / config_.prior_bw_sigma;
    prior_.e0 = VecX::Zero(15);
  }
  cache_prior();
  for (const auto& o : select_observations(obs)) {
    auto& f = features_[o.landmark_id];
    f.id = o.landmark_id;
    f.obs.emplace_back(x.t, o.bearing);
  }
}

void SlidingWindow::add_keyframe(NavState guess, DynPreintegration dyn, ImuPreintegration imu,
                                 const std::vector<LandmarkObservation>& obs) {
  if (states_.empty()) throw std::logic_error("add_keyframe: window not initialized");
  if (!dyn.finalized()) throw std::invalid_argument("add_keyframe: dynamics block not finalized");
  const NavState& last = states_.back();
  if (!(guess.t > last.t + 1e-9)) throw std::invalid_argument("add_keyframe: duplicate or out-of-order timestamp");
  guess.q.normalize();
  if (config_.force_index == 0) {
    // The incoming block measures the force of the current newest state.
    states_.back().f_ext = dyn.favg();
  }
  guess.f_ext = dyn.favg();
  Interval iv{std::move(dyn), std::move(imu), Mat12::Identity(), Mat15::Identity()};
  refresh_weights(iv);
  intervals_.push_back(std::move(iv));
  states_.push_back(guess);
  for (const auto& o : select_observations(obs)) {
    auto& f = features_[o.landmark_id];
    f.id = o.landmark_id;
    if (!f.obs.empty() && std::abs(f.obs.back().first - guess.t) < 1e-9) continue;
    f.obs.emplace_back(guess.t, o.bearing);
  }
  triangulate_pending();
}

void SlidingWindow::triangulate_pending() {
  for (auto& [id, f] : features_) {
    if (f.triangulated || f.obs.size() < 2) continue;
    const int ia = index_of(f.obs.front().first);
    if (ia < 0) continue;
    const NavState& a = states_[ia];
    const Vec2& ua = f.obs.front().second;
    const Vec3 da = (a.R() * Vec3(ua.x(), ua.y(), 1.0)).normalized();
    double best = -1.0;
    std::size_t best_j = 0;
    for (std::size_t j = 1; j < f.obs.size(); ++j) {
      const int io = index_of(f.obs[j].first);
      if (io < 0) continue;
      const Vec2& uo = f.obs[j].second;
      const Vec3 dob = (states_[io].R() * Vec3(uo.x(), uo.y(), 1.0)).normalized();
      const double ang = std::acos(std::clamp(da.dot(dob), -1.0, 1.0));
      if (ang > best) {
        best = ang;
        best_j = j;
      }
    }
    if (best < 0.0) continue;
    double depth = -1.0;
    if (best >= config_.min_parallax)
      depth = triangulate_midpoint(a, ua, states_[index_of(f.obs[best_j].first)], f.obs[best_j].second);
    if (!(depth > camera_.min_depth * 0.5 && depth < 1e3)) depth = config_.default_depth;
    f.lambda = 1.0 / depth;
    f.triangulated = true;
  }
}

void SlidingWindow::repropagate_if_needed() {
  for (std::size_t k = 0; k < intervals_.size(); ++k) {
    Interval& iv = intervals_[k];
    const NavState& x = states_[k];
    const bool dyn_far = (x.ba - iv.dyn.lin_ba()).norm() > config_.repropagate_ba ||
                         (x.bw - iv.dyn.lin_bw()).norm() > config_.repropagate_bw;
    const bool imu_far = (x.ba - iv.imu.lin_ba()).norm() > config_.repropagate_ba ||
                         (x.bw - iv.imu.lin_bw()).norm() > config_.repropagate_bw;
    if (!dyn_far && !imu_far) continue;
    if (iv.dyn.knots().empty() || iv.imu.knots().empty()) continue;
    iv.dyn.repropagate(x.ba, x.bw);
    iv.imu.repropagate(x.ba, x.bw);
    refresh_weights(iv);
    log_debug("repropagated interval at t=" + std::to_string(x.t));
  }
}

void SlidingWindow::set_prior(MarginalizationPrior p) {
  prior_ = std::move(p);
  cache_prior();
}

void SlidingWindow::cache_prior() {
  if (prior_.empty()) {
    prior_H0_.resize(0, 0);
    prior_b0_.resize(0);
    prior_c0_ = 0.0;
    return;
  }
  if (prior_.S.cols() != prior_.dim() || prior_.S.rows() != prior_.e0.size() ||
      prior_.lin.size() != prior_.times.size())
    throw std::invalid_argument("prior: dimension mismatch");
  prior_H0_ = prior_.S.transpose() * prior_.S;
  prior_b0_ = prior_.S.transpose() * prior_.e0;
  prior_c0_ = prior_.e0.squaredNorm();
}

double SlidingWindow::prior_terms(const std::deque<NavState>& states, VecX* grad, MatX* hess,
                                  std::vector<int>* idx) const {
  // |e0 + S dx|^2 = c0 + 2 b0^T dx + dx^T H0 dx; the Jacobian is S D with D
  // block diagonal (identity except the rotation blocks).
  const int n = prior_.dim();
  VecX dx(n);
  std::vector<Mat3> Jinv(prior_.times.size());
  if (idx) idx->clear();
  for (std::size_t a = 0; a < prior_.times.size(); ++a) {
    int i = -1;
    for (int k = static_cast<int>(states.size()) - 1; k >= 0; --k)
      if (std::abs(states[k].t - prior_.times[a]) < 1e-9) i = k;
    if (i < 0) throw std::logic_error("prior refers to a state outside the window");
    if (idx) idx->push_back(i);
    const Vec18 d = boxminus(states[i], prior_.lin[a]);
    dx.segment<18>(18 * a) = d;
    Jinv[a] = right_jacobian_inv(d.segment<3>(st::kQ));
  }
  const VecX H0dx = prior_H0_ * dx;
  const double cost = prior_c0_ + 2.0 * prior_b0_.dot(dx) + dx.dot(H0dx);
  if (grad && hess) {
    // Right-multiply by D (and left by D^T) block by block.
    VecX g = prior_b0_ + H0dx;
    MatX H = prior_H0_;
    const int m = static_cast<int>(Jinv.size());
    for (int a = 0; a < m; ++a) {
      const int c = 18 * a + st::kQ;
      g.segment<3>(c) = Jinv[a].transpose() * g.segment<3>(c);
      H.middleCols<3>(c) = H.middleCols<3>(c) * Jinv[a];
    }
    for (int a = 0; a < m; ++a) {
      const int c = 18 * a + st::kQ;
      H.middleRows<3>(c) = Jinv[a].transpose() * H.middleRows<3>(c);
    }
    *grad = std::move(g);
    *hess = std::move(H);
  }
  return std::max(cost, 0.0);
}

namespace {

template <int R>
void add_block(MatX& H, VecX& b, int i, const Eigen::Matrix<double, R, 18>& Ji, int j,
               const Eigen::Matrix<double, R, 18>& Jj, const Eigen::Matrix<double, R, 1>& r) {
  b.segment<18>(18 * i).noalias() += Ji.transpose() * r;
  b.segment<18>(18 * j).noalias() += Jj.transpose() * r;
  H.block<18, 18>(18 * i, 18 * i) += Ji.transpose().lazyProduct(Ji);
  H.block<18, 18>(18 * j, 18 * j) += Jj.transpose().lazyProduct(Jj);
  const Eigen::Matrix<double, 18, 18> off = Ji.transpose().lazyProduct(Jj);
  H.block<18, 18>(18 * i, 18 * j) += off;
  H.block<18, 18>(18 * j, 18 * i) += off.transpose();
}

// Visual Jacobians only touch the position and attitude columns of a state.
void add_visual_block(MatX& H, VecX& b, int i, const Mat2x18& Ji, int j, const Mat2x18& Jj,
                      const Vec2& r) {
  Eigen::Matrix<double, 2, 12> J;
  J << Ji.middleCols<3>(st::kP), Ji.middleCols<3>(st::kQ), Jj.middleCols<3>(st::kP),
      Jj.middleCols<3>(st::kQ);
  const Eigen::Matrix<double, 12, 12> JtJ = J.transpose().lazyProduct(J);
  const Eigen::Matrix<double, 12, 1> Jtr = J.transpose() * r;
  const int off[4] = {18 * i + st::kP, 18 * i + st::kQ, 18 * j + st::kP, 18 * j + st::kQ};
  for (int u = 0; u < 4; ++u) {
    b.segment<3>(off[u]) += Jtr.segment<3>(3 * u);
    for (int v = 0; v < 4; ++v) H.block<3, 3>(off[u], off[v]) += JtJ.block<3, 3>(3 * u, 3 * v);
  }
}

}  // namespace

void SlidingWindow::build(System& sys, bool marg_only) const {
  const int N = static_cast<int>(states_.size());
  const int nx = 18 * N;
  sys.H = MatX::Zero(nx, nx);
  sys.b = VecX::Zero(nx);
  sys.cost = 0.0;
  sys.feats.clear();

  if (!prior_.empty()) {
    std::vector<int> idx;
    VecX bp;
    MatX Hp;
    sys.cost += prior_terms(states_, &bp, &Hp, &idx);
    for (std::size_t a = 0; a < idx.size(); ++a) {
      sys.b.segment<18>(18 * idx[a]) += bp.segment<18>(18 * a);
      for (std::size_t c = 0; c < idx.size(); ++c)
        sys.H.block<18, 18>(18 * idx[a], 18 * idx[c]) += Hp.block<18, 18>(18 * a, 18 * c);
    }
  }

  const int n_int = marg_only ? std::min<int>(1, static_cast<int>(intervals_.size()))
                              : static_cast<int>(intervals_.size());
  const DynamicsOptions dopt = config_.dynamics_options();
  for (int k = 0; k < n_int; ++k) {
    const Interval& iv = intervals_[k];
    const NavState& xi = states_[k];
    const NavState& xj = states_[k + 1];
    {
      const Vec15 r = iv.U_imu * inertial_residual(xi, xj, iv.imu).r;
      const InertialJacobians J = inertial_jacobians(xi, xj, iv.imu);
      sys.cost += r.squaredNorm();
      add_block<15>(sys.H, sys.b, k, iv.U_imu * J.Ji, k + 1, iv.U_imu * J.Jj, r);
    }
    if (config_.use_dynamics) {
      const Vec12 r = iv.U_dyn * dynamics_residual(xi, xj, iv.dyn, dopt).r;
      const DynamicsJacobians J = dynamics_jacobians(xi, xj, iv.dyn, dopt);
      sys.cost += r.squaredNorm();
      add_block<12>(sys.H, sys.b, k, iv.U_dyn * J.Jk, k + 1, iv.U_dyn * J.Jk1, r);
    }
  }

  const VisualOptions vopt = visual_options();
  for (const auto& [id, f] : features_) {
    if (!feature_active(f)) continue;
    const int ia = index_of(f.obs.front().first);
    if (ia < 0) continue;
    if (marg_only && ia != 0) continue;
    System::Feat feat;
    feat.id = id;
    for (std::size_t j = 1; j < f.obs.size(); ++j) {
      const int io = index_of(f.obs[j].first);
      if (io < 0 || io == ia) continue;
      const VisualResidual v = visual_residual(states_[ia], states_[io], {f.lambda},
                                               f.obs.front().second, f.obs[j].second, vopt);
      if (!v.valid) continue;
      const double w = v.sqrt_info * std::sqrt(v.robust_weight);
      const Vec2 r = w * v.r;
      const Mat2x18 Ja = w * v.J_anchor, Jo = w * v.J_observer;
      const Vec2 Jl = w * v.J_lambda;
      sys.cost += v.cost;
      add_visual_block(sys.H, sys.b, ia, Ja, io, Jo, r);
      feat.Hll += Jl.squaredNorm();
      feat.bl += Jl.dot(r);
      feat.add(ia, Ja.transpose() * Jl);
      feat.add(io, Jo.transpose() * Jl);
    }
    if (feat.Hll > 0.0) sys.feats.push_back(std::move(feat));
  }
}

double SlidingWindow::evaluate_cost(const std::deque<NavState>& states,
                                    const std::map<std::int64_t, FeatureTrack>& features) const {
  auto find = [&](double t) {
    for (int i = static_cast<int>(states.size()) - 1; i >= 0; --i)
      if (std::abs(states[i].t - t) < 1e-9) return i;
    return -1;
  };
  double cost = 0.0;
  if (!prior_.empty()) cost += prior_terms(states, nullptr, nullptr, nullptr);
  const DynamicsOptions dopt = config_.dynamics_options();
  for (std::size_t k = 0; k < intervals_.size(); ++k) {
    const Interval& iv = intervals_[k];
    cost += (iv.U_imu * inertial_residual(states[k], states[k + 1], iv.imu).r).squaredNorm();
    if (config_.use_dynamics)
      cost += (iv.U_dyn * dynamics_residual(states[k], states[k + 1], iv.dyn, dopt).r).squaredNorm();
  }
  const VisualOptions vopt = visual_options();
  for (const auto& [id, f] : features) {
    if (!feature_active(f)) continue;
    const int ia = find(f.obs.front().first);
    if (ia < 0) continue;
    for (std::size_t j = 1; j < f.obs.size(); ++j) {
      const int io = find(f.obs[j].first);
      if (io < 0 || io == ia) continue;
      const VisualResidual v = visual_residual(states[ia], states[io], {f.lambda},
                                               f.obs.front().second, f.obs[j].second, vopt);
      if (v.valid) cost += v.cost;
    }
  }
  return cost;
}

double SlidingWindow::cost() const { return evaluate_cost(states_, features_); }

OptimizeReport SlidingWindow::optimize() {
  if (states_.size() < 2) throw std::logic_error("optimize: window needs at least two states");
  repropagate_if_needed();
  OptimizeReport rep;
  double cost = evaluate_cost(states_, features_);
  rep.costs.push_back(cost);
  if (!std::isfinite(cost)) {
    rep.diverged = true;
    rep.final_cost = cost;
    return rep;
  }
  double mu = config_.initial_damping;
  const int N = static_cast<int>(states_.size());
  const int nx = 18 * N;
  System sys;
  bool stop = false;
  while (rep.iterations < config_.max_iterations && !stop) {
    if (cost == 0.0) {
      rep.converged = true;
      break;
    }
    build(sys, false);
    ++rep.iterations;

    // Dimensions nothing constrains (e.g. the force of the newest state) stay fixed.
    std::vector<bool> fixed(nx, false);
    for (int i = 0; i < nx; ++i) fixed[i] = sys.H(i, i) == 0.0;

    while (true) {
      MatX H = sys.H;
      VecX b = sys.b;
      for (int i = 0; i < nx; ++i) H(i, i) += mu * std::max(sys.H(i, i), 1e-8);
      std::vector<double> hll(sys.feats.size());
      MatX V = MatX::Zero(nx, static_cast<Eigen::Index>(sys.feats.size()));
      for (std::size_t l = 0; l < sys.feats.size(); ++l) {
        const auto& f = sys.feats[l];
        hll[l] = f.Hll + mu * std::max(f.Hll, 1e-8);
        const double s = 1.0 / std::sqrt(hll[l]);
        for (const auto& [i, vi] : f.Hxl) {
          V.col(l).segment<18>(18 * i) = vi * s;
          b.segment<18>(18 * i) -= vi * (f.bl / hll[l]);
        }
      }
      H.selfadjointView<Eigen::Lower>().rankUpdate(V, -1.0);
      H = H.selfadjointView<Eigen::Lower>();
      for (int i = 0; i < nx; ++i)
        if (fixed[i]) {
          H.row(i).setZero();
          H.col(i).setZero();
          H(i, i) = 1.0;
          b(i) = 0.0;
        }
      Eigen::LDLT<MatX> ldlt(H);
      VecX dx = ldlt.solve(-b);
      bool ok = ldlt.info() == Eigen::Success && dx.allFinite();

      std::deque<NavState> trial_states = states_;
      std::map<std::int64_t, FeatureTrack> trial_features = features_;
      double new_cost = std::numeric_limits<double>::infinity();
      if (ok) {
        for (int i = 0; i < N; ++i) trial_states[i] = boxplus(states_[i], dx.segment<18>(18 * i));
        for (std::size_t l = 0; l < sys.feats.size() && ok; ++l) {
          const auto& f = sys.feats[l];
          double acc = f.bl;
          for (const auto& [i, vi] : f.Hxl) acc += vi.dot(dx.segment<18>(18 * i));
          const double dl = -acc / hll[l];
          auto& tf = trial_features.at(f.id);
          tf.lambda += dl;
          if (!(tf.lambda > 1e-6)) ok = false;
        }
        if (ok) new_cost = evaluate_cost(trial_states, trial_features);
      }
      if (ok && std::isfinite(new_cost) && new_cost <= cost) {
        const double rel = (cost - new_cost) / std::max(cost, 1e-300);
        states_ = std::move(trial_states);
        features_ = std::move(trial_features);
        cost = new_cost;
        rep.costs.push_back(cost);
        mu = std::max(mu / 10.0, 1e-12);
        if (rel < config_.tolerance || dx.norm() < 1e-12) {
          rep.converged = true;
          stop = true;
        }
        break;
      }
      mu *= 10.0;
      if (mu > 1e12) {
        // No damped step lowers the cost any further.
        rep.converged = true;
        stop = true;
        break;
      }
    }
  }
  for (const auto& x : states_)
    if (!x.p.allFinite() || !x.v.allFinite() || !x.q.coeffs().allFinite() || !x.ba.allFinite() ||
        !x.bw.allFinite() || x.v.norm() > config_.divergence_speed)
      rep.diverged = true;
  if (!std::isfinite(cost)) rep.diverged = true;
  rep.final_cost = cost;
  return rep;
}

NavState SlidingWindow::marginalize() {
  if (states_.empty()) throw std::logic_error("marginalize: empty window");
  const NavState x0 = states_.front();
  const int N = static_cast<int>(states_.size());
  const bool prior_has_x0 = !prior_.empty() && index_of(prior_.times.front()) == 0;

  System sys;
  build(sys, true);
  const bool x0_has_factors = prior_has_x0 || !sys.feats.empty() ||
                              !sys.H.block<18, 18>(0, 0).isZero(0.0);
  if (!x0_has_factors || N == 1) {
    states_.pop_front();
    if (!intervals_.empty()) intervals_.pop_front();
    if (N == 1) {
      prior_ = {};
      cache_prior();
    }
    reanchor_after_removal(x0);
    return x0;
  }

  // Features anchored at x0 are eliminated first (scalar pivots), then x0.
  MatX H = sys.H;
  VecX b = sys.b;
  for (const auto& f : sys.feats) {
    if (!(f.Hll > 1e-10)) continue;
    for (const auto& [i, vi] : f.Hxl) {
      b.segment<18>(18 * i) -= vi * (f.bl / f.Hll);
      for (const auto& [j, vj] : f.Hxl) H.block<18, 18>(18 * i, 18 * j) -= vi * vj.transpose() / f.Hll;
    }
  }
  const SqrtPrior sp = schur_marginalize(H, b, 18);

  MarginalizationPrior p;
  for (int i = 1; i < N; ++i) {
    p.times.push_back(states_[i].t);
    p.lin.push_back(states_[i]);
  }
  p.S = sp.S;
  p.e0 = sp.e0;
  prior_ = std::move(p);
  cache_prior();

  states_.pop_front();
  intervals_.pop_front();
  reanchor_after_removal(x0);
  return x0;
}

void SlidingWindow::reanchor_after_removal(const NavState& removed) {
  for (auto it = features_.begin(); it != features_.end();) {
    FeatureTrack& f = it->second;
    if (!f.obs.empty() && std::abs(f.obs.front().first - removed.t) < 1e-9) {
      const Vec2 ua = f.obs.front().second;
      f.obs.erase(f.obs.begin());
      if (f.triangulated && !f.obs.empty()) {
        const Vec3 Pw = removed.p + removed.R() * Vec3(ua.x(), ua.y(), 1.0) / f.lambda;
        const int in = index_of(f.obs.front().first);
        if (in >= 0) {
          const Vec3 Pn = states_[in].R().transpose() * (Pw - states_[in].p);
          if (Pn.z() > camera_.min_depth * 0.5) {
            f.lambda = 1.0 / Pn.z();
          } else {
            f.triangulated = false;
          }
        } else {
          f.triangulated = false;
        }
      }
    }
    if (f.obs.empty())
      it = features_.erase(it);
    else
      ++it;
  }
}

// ---------------------------------------------------------------------------

namespace {

const GroundTruthSample* truth_at(const SensorLog& log, double t) {
  auto it = std::lower_bound(log.truth.begin(), log.truth.end(), t,
                             [](const GroundTruthSample& s, double v) { return s.t < v; });
  const GroundTruthSample* best = nullptr;
  double best_d = 1e-3;
  for (auto c : {it, it == log.truth.begin() ? it : it - 1}) {
    if (c == log.truth.end()) continue;
    const double d = std::abs(c->t - t);
    if (d <= best_d) {
      best_d = d;
      best = &*c;
    }
  }
  return best;
}

}  // namespace

RunResult run_batch(const SensorLog& log, const RunOptions& options) {
  options.solver.validate();
  RunResult res;
  res.has_force = options.solver.use_dynamics;
  if (log.imu.empty()) return res;
  const auto fused = fuse_streams(log.imu, log.rotor, log.thrust_coeffs, log.mass);

  std::vector<double> frames;
  for (double t : log.frame_times())
    if (t >= fused.front().t - 1e-9 && t <= fused.back().t + 1e-9) frames.push_back(t);
  if (frames.empty()) return res;

  std::map<double, std::vector<LandmarkObservation>> by_frame;
  for (const auto& o : log.cam) by_frame[o.frame_t].push_back(o);
  auto obs_at = [&](double t) -> const std::vector<LandmarkObservation>& {
    static const std::vector<LandmarkObservation> none;
    auto it = by_frame.find(t);
    return it == by_frame.end() ? none : it->second;
  };

  const GroundTruthSample* g0 = truth_at(log, frames.front());
  if (!g0) throw std::runtime_error("run_batch: no ground truth at the first frame for initialization");
  std::mt19937_64 rng(options.init_seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto noise3 = [&](double s) { return Vec3(s * nd(rng), s * nd(rng), s * nd(rng)); };
  NavState x0;
  x0.t = frames.front();
  x0.p = g0->p_w;
  x0.q = g0->q_wb.normalized();
  x0.v = g0->v_w + noise3(options.init_vel_sigma);
  x0.ba = g0->b_a + noise3(options.init_ba_sigma);
  x0.bw = g0->b_w + noise3(options.init_bw_sigma);

  SlidingWindow win(options.solver, options.weight_noise, log.camera);
  win.initialize(x0, obs_at(frames.front()));

  for (std::size_t i = 1; i < frames.size(); ++i) {
    const NavState& last = win.states().back();
    const auto knots = interval_knots(fused, last.t, frames[i]);
    auto dyn = DynPreintegration::from_knots(knots, last.ba, last.bw, options.weight_noise);
    auto imu = ImuPreintegration::from_knots(knots, last.ba, last.bw, options.weight_noise);
    const double dt = imu.dt_total();
    const Mat3 R0 = last.R();
    NavState guess = last;
    guess.t = frames[i];
    guess.p = last.p + last.v * dt + 0.5 * kGravity * dt * dt + R0 * imu.dp();
    guess.v = last.v + kGravity * dt + R0 * imu.dv();
    guess.q = (last.q * imu.dq()).normalized();
    win.add_keyframe(guess, std::move(dyn), std::move(imu), obs_at(frames[i]));
    if (options.bootstrap_full_window && !win.full()) {
      res.records.push_back({frames[i], 0, {}, false});
      continue;
    }

    const OptimizeReport rep = win.optimize();
    res.records.push_back({frames[i], rep.iterations, rep.costs, rep.converged});
    res.final_cost = rep.final_cost;
    if (rep.diverged) {
      res.diverged = true;
      log_warn("estimator diverged at t=" + std::to_string(frames[i]));
      break;
    }
    if (win.full()) res.estimates.push_back(win.marginalize());
  }
  if (!res.diverged)
    for (const auto& x : win.states()) res.estimates.push_back(x);

  if (options.solver.force_index == 1)
    for (std::size_t k = 0; k + 1 < res.estimates.size(); ++k)
      res.estimates[k].f_ext = res.estimates[k + 1].f_ext;
  if (!res.has_force)
    for (auto& x : res.estimates) x.f_ext = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
  return res;
}

// ---------------------------------------------------------------------------

namespace {

const char* kEstimateHeader =
    "t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,bax,bay,baz,bgx,bgy,bgz,fx,fy,fz";

}  // namespace

void write_estimate_csv(const std::string& path, const RunResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kEstimateHeader << '\n';
  for (const auto& x : result.estimates) {
    const double v[] = {x.t,       x.p.x(),   x.p.y(),     x.p.z(),     x.v.x(),     x.v.y(),     x.v.z(),
                        x.q.w(),   x.q.x(),   x.q.y(),     x.q.z(),     x.ba.x(),    x.ba.y(),    x.ba.z(),
                        x.bw.x(),  x.bw.y(),  x.bw.z(),    x.f_ext.x(), x.f_ext.y(), x.f_ext.z()};
    for (int i = 0; i < 20; ++i) out << (i ? "," : "") << format_real(v[i]);
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

RunResult read_estimate_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line != kEstimateHeader)
    throw ParseError(path, 1, "unexpected estimate header");
  RunResult res;
  res.has_force = false;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    double v[20];
    int n = 0;
    while (std::getline(ss, cell, ',')) {
      if (n >= 20) throw ParseError(path, lineno, "too many columns");
      try {
        std::size_t used = 0;
        v[n] = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError(path, lineno, "bad number '" + cell + "'");
      }
      ++n;
    }
    if (n != 20) throw ParseError(path, lineno, "expected 20 columns");
    NavState x;
    x.t = v[0];
    x.p = Vec3(v[1], v[2], v[3]);
    x.v = Vec3(v[4], v[5], v[6]);
    x.q = Quat(v[7], v[8], v[9], v[10]).normalized();
    x.ba = Vec3(v[11], v[12], v[13]);
    x.bw = Vec3(v[14], v[15], v[16]);
    x.f_ext = Vec3(v[17], v[18], v[19]);
    if (x.f_ext.allFinite()) res.has_force = true;
    res.estimates.push_back(x);
  }
  return res;
}

}  // namespace vid
