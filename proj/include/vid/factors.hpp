#pragma once

#include "vid/preintegration.hpp"
#include "vid/types.hpp"

#include <Eigen/Core>

#include <vector>

namespace vid {

using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat12 = Eigen::Matrix<double, 12, 12>;
using Vec15 = Eigen::Matrix<double, 15, 1>;
using Vec18 = Eigen::Matrix<double, 18, 1>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// NavState tangent layout: [p, v, theta, b_a, b_w, F]. Rotation uses a
/// right perturbation q * Exp(theta); everything else is additive.
namespace st {
constexpr int kDim = 18;
constexpr int kP = 0, kV = 3, kQ = 6, kBa = 9, kBw = 12, kF = 15;
}  // namespace st

NavState boxplus(const NavState& x, const Vec18& d);
/// Tangent vector d with boxplus(ref, d) == x.
Vec18 boxminus(const NavState& x, const NavState& ref);

/// Upper factor U with W = U^T U, so r^T W r = |U r|^2. Adds 1e-12 I when W
/// is not positive definite; `regularized` reports that.
MatX sqrt_information(const MatX& W, bool* regularized = nullptr);

struct FeatureState {
  double lambda = 0.0;  // inverse depth in the anchor frame
};

// ---------------------------------------------------------------------------
// Dynamics (thrust / external force) factor

struct DynamicsOptions {
  int force_index = 0;          // 0: force variable of x_k, 1: of x_k+1
  bool vimo_mode = false;       // zero-mean force prior instead of the force measurement
  double vimo_force_sigma = 0.01;
};

struct DynamicsResidual {
  Vec12 r = Vec12::Zero();  // [d_alpha, d_beta, d_F, d_ba]
  Mat12 W = Mat12::Zero();
  bool regularized = false;
};

using Mat12x18 = Eigen::Matrix<double, 12, 18>;

struct DynamicsJacobians {
  Mat12x18 Jk = Mat12x18::Zero();
  Mat12x18 Jk1 = Mat12x18::Zero();
};

DynamicsResidual dynamics_residual(const NavState& xk, const NavState& xk1,
                                   const DynPreintegration& block,
                                   const DynamicsOptions& opts = {});
DynamicsJacobians dynamics_jacobians(const NavState& xk, const NavState& xk1,
                                     const DynPreintegration& block,
                                     const DynamicsOptions& opts = {});

// ---------------------------------------------------------------------------
// Inertial factor

using Mat15x18 = Eigen::Matrix<double, 15, 18>;

struct InertialResidual {
  Vec15 r = Vec15::Zero();  // [dp, dv, dtheta, dba, dbw]
  Mat15 W = Mat15::Zero();
  bool regularized = false;
};

struct InertialJacobians {
  Mat15x18 Ji = Mat15x18::Zero();
  Mat15x18 Jj = Mat15x18::Zero();
};

InertialResidual inertial_residual(const NavState& xi, const NavState& xj,
                                   const ImuPreintegration& block);
InertialJacobians inertial_jacobians(const NavState& xi, const NavState& xj,
                                     const ImuPreintegration& block);

// ---------------------------------------------------------------------------
// Visual factor

using Mat2x18 = Eigen::Matrix<double, 2, 18>;

struct VisualOptions {
  double focal_px = 460.0;
  double pixel_sigma = 1.0;
  double huber = 1.0;  // on the whitened (pixel-equivalent) norm
};

struct VisualResidual {
  bool valid = false;           // false when the point is behind the observer
  Vec2 r = Vec2::Zero();        // normalized image coordinates
  double sqrt_info = 0.0;       // focal / pixel_sigma
  double robust_weight = 1.0;   // Huber weight on the squared whitened norm
  double cost = 0.0;            // robust cost of the whitened residual
  Mat2x18 J_anchor = Mat2x18::Zero();
  Mat2x18 J_observer = Mat2x18::Zero();
  Vec2 J_lambda = Vec2::Zero();
};

/// Reprojection of the inverse-depth point anchored in `anchor` into
/// `observer`. Body and camera frames coincide.
VisualResidual visual_residual(const NavState& anchor, const NavState& observer,
                               const FeatureState& feature, const Vec2& obs_anchor,
                               const Vec2& obs_observer, const VisualOptions& opts = {});

/// Huber cost rho(s) of a squared whitened norm s and its derivative.
double huber_cost(double squared_norm, double delta);
double huber_weight(double squared_norm, double delta);

// ---------------------------------------------------------------------------
// Marginalization prior

/// Gaussian prior in square-root form: cost |e0 + S (x [-] x_lin)|^2 over the
/// listed states, identified by timestamp.
struct MarginalizationPrior {
  std::vector<double> times;
  std::vector<NavState> lin;
  MatX S;
  VecX e0;

  bool empty() const { return times.empty(); }
  int dim() const { return static_cast<int>(times.size()) * st::kDim; }
};

struct PriorResidual {
  VecX r;
  MatX J;  // rows x (18 * states)
};

/// `states` must correspond one to one with prior.lin.
PriorResidual prior_residual(const std::vector<NavState>& states,
                             const MarginalizationPrior& prior);

}  // namespace vid
