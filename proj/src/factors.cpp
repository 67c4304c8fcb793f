#include "vid/factors.hpp"

#include "vid/log.hpp"

#include <Eigen/Cholesky>

#include <array>
#include <cmath>
#include <stdexcept>

namespace vid {

NavState boxplus(const NavState& x, const Vec18& d) {
  NavState y = x;
  y.p += d.segment<3>(st::kP);
  y.v += d.segment<3>(st::kV);
  y.q = (x.q * quat_exp(d.segment<3>(st::kQ))).normalized();
  y.ba += d.segment<3>(st::kBa);
  y.bw += d.segment<3>(st::kBw);
  y.f_ext += d.segment<3>(st::kF);
  return y;
}

Vec18 boxminus(const NavState& x, const NavState& ref) {
  Vec18 d;
  d.segment<3>(st::kP) = x.p - ref.p;
  d.segment<3>(st::kV) = x.v - ref.v;
  d.segment<3>(st::kQ) = quat_log(ref.q.conjugate() * x.q);
  d.segment<3>(st::kBa) = x.ba - ref.ba;
  d.segment<3>(st::kBw) = x.bw - ref.bw;
  d.segment<3>(st::kF) = x.f_ext - ref.f_ext;
  return d;
}

MatX sqrt_information(const MatX& W, bool* regularized) {
  const MatX Ws = 0.5 * (W + W.transpose());
  Eigen::LLT<MatX> llt(Ws);
  bool reg = false;
  if (llt.info() != Eigen::Success) {
    reg = true;
    llt.compute(Ws + 1e-12 * MatX::Identity(W.rows(), W.cols()));
    if (llt.info() != Eigen::Success) throw std::runtime_error("sqrt_information: matrix is not PSD");
  }
  if (regularized) *regularized = reg;
  return llt.matrixU();
}

namespace {

/// Inverse of a covariance block; a failed factorization is retried with 1e-12 I.
MatX regularized_inverse(const MatX& P, bool& regularized, const char* what) {
  const MatX Ps = 0.5 * (P + P.transpose());
  const MatX I = MatX::Identity(P.rows(), P.cols());
  Eigen::LLT<MatX> llt(Ps);
  regularized = false;
  if (llt.info() != Eigen::Success || !std::isfinite(llt.matrixL().determinant())) {
    regularized = true;
    log_warn(std::string(what) + ": singular covariance, regularized with 1e-12 I");
    llt.compute(Ps + 1e-12 * I);
    if (llt.info() != Eigen::Success) throw std::runtime_error(std::string(what) + ": covariance not PSD");
  }
  MatX W = llt.solve(I);
  return 0.5 * (W + W.transpose());
}

struct DynTerms {
  CorrectedDyn c;
  double dt = 0.0;
  Vec3 F = Vec3::Zero();
  Vec3 u_alpha = Vec3::Zero();
  Vec3 u_beta = Vec3::Zero();
  Mat3 RkT = Mat3::Identity();
};

DynTerms dyn_terms(const NavState& xk, const NavState& xk1, const DynPreintegration& block,
                   const DynamicsOptions& opts) {
  if (!block.finalized()) throw std::logic_error("dynamics factor: block not finalized");
  DynTerms t;
  t.c = dyn_correct_bias(block, xk.ba, xk.bw);
  t.dt = block.dt_total();
  t.F = opts.force_index == 0 ? xk.f_ext : xk1.f_ext;
  t.u_alpha = xk1.p - xk.p - xk.v * t.dt - 0.5 * kGravity * t.dt * t.dt;
  t.u_beta = xk1.v - xk.v - kGravity * t.dt;
  t.RkT = xk.R().transpose();
  return t;
}

}  // namespace

DynamicsResidual dynamics_residual(const NavState& xk, const NavState& xk1,
                                   const DynPreintegration& block, const DynamicsOptions& opts) {
  const DynTerms t = dyn_terms(xk, xk1, block, opts);
  DynamicsResidual out;
  out.r.segment<3>(0) = t.RkT * t.u_alpha - 0.5 * t.F * t.dt * t.dt - t.c.alpha;
  out.r.segment<3>(3) = t.RkT * t.u_beta - t.F * t.dt - t.c.beta;
  out.r.segment<3>(6) = opts.vimo_mode ? t.F : Vec3(t.F - t.c.favg);
  out.r.segment<3>(9) = xk1.ba - xk.ba;

  const Mat15 P = block.P();
  using B = DynPreintegration;
  if (!opts.vimo_mode) {
    MatX P12 = P.topLeftCorner<12, 12>();
    out.W = regularized_inverse(P12, out.regularized, "dynamics factor");
  } else {
    if (!(opts.vimo_force_sigma > 0.0)) throw std::invalid_argument("vimo_force_sigma must be positive");
    const std::array<int, 9> idx{B::kAlpha, B::kAlpha + 1, B::kAlpha + 2, B::kBeta, B::kBeta + 1,
                                 B::kBeta + 2, B::kBa, B::kBa + 1, B::kBa + 2};
    const std::array<int, 9> rows{0, 1, 2, 3, 4, 5, 9, 10, 11};
    MatX P9(9, 9);
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) P9(i, j) = P(idx[i], idx[j]);
    const MatX W9 = regularized_inverse(P9, out.regularized, "dynamics factor");
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) out.W(rows[i], rows[j]) = W9(i, j);
    out.W.block<3, 3>(6, 6) = Mat3::Identity() / (opts.vimo_force_sigma * opts.vimo_force_sigma);
  }
  return out;
}

DynamicsJacobians dynamics_jacobians(const NavState& xk, const NavState& xk1,
                                     const DynPreintegration& block, const DynamicsOptions& opts) {
  const DynTerms t = dyn_terms(xk, xk1, block, opts);
  using B = DynPreintegration;
  const Mat18& J = block.J_full();
  const Mat3 I = Mat3::Identity();
  DynamicsJacobians out;
  Mat12x18& Jk = out.Jk;
  Mat12x18& Jk1 = out.Jk1;

  Jk.block<3, 3>(0, st::kP) = -t.RkT;
  Jk.block<3, 3>(0, st::kV) = -t.RkT * t.dt;
  Jk.block<3, 3>(0, st::kQ) = skew(t.RkT * t.u_alpha);
  Jk.block<3, 3>(0, st::kBa) = -J.block<3, 3>(B::kAlpha, B::kBa);
  Jk.block<3, 3>(0, st::kBw) = -J.block<3, 3>(B::kAlpha, B::kBw);
  Jk1.block<3, 3>(0, st::kP) = t.RkT;

  Jk.block<3, 3>(3, st::kV) = -t.RkT;
  Jk.block<3, 3>(3, st::kQ) = skew(t.RkT * t.u_beta);
  Jk.block<3, 3>(3, st::kBa) = -J.block<3, 3>(B::kBeta, B::kBa);
  Jk.block<3, 3>(3, st::kBw) = -J.block<3, 3>(B::kBeta, B::kBw);
  Jk1.block<3, 3>(3, st::kV) = t.RkT;

  if (!opts.vimo_mode) {
    Jk.block<3, 3>(6, st::kBa) = -J.block<3, 3>(B::kForce, B::kBa);
    Jk.block<3, 3>(6, st::kBw) = -J.block<3, 3>(B::kForce, B::kBw);
  }

  Jk.block<3, 3>(9, st::kBa) = -I;
  Jk1.block<3, 3>(9, st::kBa) = I;

  Mat12x18& JF = opts.force_index == 0 ? Jk : Jk1;
  JF.block<3, 3>(0, st::kF) = -0.5 * t.dt * t.dt * I;
  JF.block<3, 3>(3, st::kF) = -t.dt * I;
  JF.block<3, 3>(6, st::kF) = I;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct ImuTerms {
  ImuPreintegration::Corrected c;
  double dt = 0.0;
  Vec3 u_p, u_v;
  Mat3 RiT;
  Mat3 E;
  Vec3 r_theta;
};

ImuTerms imu_terms(const NavState& xi, const NavState& xj, const ImuPreintegration& block) {
  ImuTerms t;
  t.c = block.correct(xi.ba, xi.bw);
  t.dt = block.dt_total();
  t.u_p = xj.p - xi.p - xi.v * t.dt - 0.5 * kGravity * t.dt * t.dt;
  t.u_v = xj.v - xi.v - kGravity * t.dt;
  t.RiT = xi.R().transpose();
  t.E = t.c.dq.toRotationMatrix().transpose() * t.RiT * xj.R();
  t.r_theta = so3_log(t.E);
  return t;
}

}  // namespace

InertialResidual inertial_residual(const NavState& xi, const NavState& xj,
                                   const ImuPreintegration& block) {
  const ImuTerms t = imu_terms(xi, xj, block);
  InertialResidual out;
  out.r.segment<3>(0) = t.RiT * t.u_p - t.c.dp;
  out.r.segment<3>(3) = t.RiT * t.u_v - t.c.dv;
  out.r.segment<3>(6) = t.r_theta;
  out.r.segment<3>(9) = xj.ba - xi.ba;
  out.r.segment<3>(12) = xj.bw - xi.bw;
  MatX P = block.P();
  out.W = regularized_inverse(P, out.regularized, "inertial factor");
  return out;
}

InertialJacobians inertial_jacobians(const NavState& xi, const NavState& xj,
                                     const ImuPreintegration& block) {
  const ImuTerms t = imu_terms(xi, xj, block);
  using B = ImuPreintegration;
  const Mat15& J = block.J();
  const Mat3 I = Mat3::Identity();
  InertialJacobians out;
  Mat15x18& Ji = out.Ji;
  Mat15x18& Jj = out.Jj;

  Ji.block<3, 3>(0, st::kP) = -t.RiT;
  Ji.block<3, 3>(0, st::kV) = -t.RiT * t.dt;
  Ji.block<3, 3>(0, st::kQ) = skew(t.RiT * t.u_p);
  Ji.block<3, 3>(0, st::kBa) = -J.block<3, 3>(B::kP, B::kBa);
  Ji.block<3, 3>(0, st::kBw) = -J.block<3, 3>(B::kP, B::kBw);
  Jj.block<3, 3>(0, st::kP) = t.RiT;

  Ji.block<3, 3>(3, st::kV) = -t.RiT;
  Ji.block<3, 3>(3, st::kQ) = skew(t.RiT * t.u_v);
  Ji.block<3, 3>(3, st::kBa) = -J.block<3, 3>(B::kV, B::kBa);
  Ji.block<3, 3>(3, st::kBw) = -J.block<3, 3>(B::kV, B::kBw);
  Jj.block<3, 3>(3, st::kV) = t.RiT;

  const Mat3 Jr_inv = right_jacobian_inv(t.r_theta);
  const Mat3 Jtw = J.block<3, 3>(B::kTheta, B::kBw);
  const Vec3 phi = Jtw * (xi.bw - block.lin_bw());
  Ji.block<3, 3>(6, st::kQ) = -Jr_inv * xj.R().transpose() * xi.R();
  Ji.block<3, 3>(6, st::kBw) = -Jr_inv * t.E.transpose() * right_jacobian(phi) * Jtw;
  Jj.block<3, 3>(6, st::kQ) = Jr_inv;

  Ji.block<3, 3>(9, st::kBa) = -I;
  Jj.block<3, 3>(9, st::kBa) = I;
  Ji.block<3, 3>(12, st::kBw) = -I;
  Jj.block<3, 3>(12, st::kBw) = I;
  return out;
}

// ---------------------------------------------------------------------------

double huber_cost(double s, double delta) {
  const double e = std::sqrt(s);
  return e <= delta ? s : 2.0 * delta * e - delta * delta;
}

double huber_weight(double s, double delta) {
  const double e = std::sqrt(s);
  return e <= delta ? 1.0 : delta / e;
}

VisualResidual visual_residual(const NavState& anchor, const NavState& observer,
                               const FeatureState& feature, const Vec2& obs_anchor,
                               const Vec2& obs_observer, const VisualOptions& opts) {
  if (!(feature.lambda > 0.0)) throw std::invalid_argument("visual factor: lambda must be positive");
  if (!(opts.pixel_sigma > 0.0) || !(opts.focal_px > 0.0))
    throw std::invalid_argument("visual factor: focal and pixel sigma must be positive");
  VisualResidual out;
  const Mat3 Ra = anchor.R(), Ro = observer.R();
  const Vec3 b(obs_anchor.x(), obs_anchor.y(), 1.0);
  const Vec3 pa = b / feature.lambda;
  const Vec3 Pw = anchor.p + Ra * pa;
  const Vec3 Po = Ro.transpose() * (Pw - observer.p);
  if (!(Po.z() > 1e-6)) return out;
  out.valid = true;
  const double iz = 1.0 / Po.z();
  out.r = Vec2(Po.x() * iz, Po.y() * iz) - obs_observer;
  out.sqrt_info = opts.focal_px / opts.pixel_sigma;
  const double s = (out.sqrt_info * out.r).squaredNorm();
  out.robust_weight = huber_weight(s, opts.huber);
  out.cost = huber_cost(s, opts.huber);

  Eigen::Matrix<double, 2, 3> dpi;
  dpi << iz, 0.0, -Po.x() * iz * iz, 0.0, iz, -Po.y() * iz * iz;
  const Mat3 RoT = Ro.transpose();
  out.J_anchor.block<2, 3>(0, st::kP) = dpi * RoT;
  out.J_anchor.block<2, 3>(0, st::kQ) = -dpi * RoT * Ra * skew(pa);
  out.J_observer.block<2, 3>(0, st::kP) = -dpi * RoT;
  out.J_observer.block<2, 3>(0, st::kQ) = dpi * skew(Po);
  out.J_lambda = -dpi * RoT * Ra * b / (feature.lambda * feature.lambda);
  return out;
}

// ---------------------------------------------------------------------------

PriorResidual prior_residual(const std::vector<NavState>& states,
                             const MarginalizationPrior& prior) {
  PriorResidual out;
  if (prior.empty()) {
    if (!states.empty()) throw std::invalid_argument("prior_residual: states given for an empty prior");
    out.r.resize(0);
    out.J.resize(0, 0);
    return out;
  }
  const int n = prior.dim();
  if (states.size() != prior.lin.size() || prior.S.cols() != n || prior.S.rows() != prior.e0.size())
    throw std::invalid_argument("prior_residual: dimension mismatch");
  VecX dx(n);
  out.J = prior.S;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const Vec18 d = boxminus(states[i], prior.lin[i]);
    dx.segment<18>(18 * i) = d;
    const int c = 18 * static_cast<int>(i) + st::kQ;
    out.J.middleCols<3>(c) = prior.S.middleCols<3>(c) * right_jacobian_inv(d.segment<3>(st::kQ));
  }
  out.r = prior.e0 + prior.S * dx;
  return out;
}

}  // namespace vid
