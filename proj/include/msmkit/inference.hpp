#pragma once

#include <Eigen/Dense>

#include "msmkit/common.hpp"

namespace msmkit {

// Hard-coded 97.5% normal quantile for the default 95% level.
inline constexpr double kZ975 = 1.959963985;

// Inverse standard normal CDF (Wichura's AS241 rational approximation,
// |error| < 1e-8 over (0,1)); used for non-default interval levels.
double normal_quantile(double p);

// Rows are the estimated efficient influence function values
// S_i = -[jac_u2]^{-1} (pseudo_i - u1_hat).
struct InfluenceMatrix {
  Eigen::MatrixXd S;  // n x d
  double jac_condition = 0.0;
};

// jac_u2 is the Jacobian of the model term of the estimating equation at the
// solution, i.e. the negative of the moment Jacobian; it must be invertible.
InfluenceMatrix eif_matrix(const Eigen::MatrixXd& pseudo,
                           const Eigen::VectorXd& u1_hat,
                           const Eigen::MatrixXd& jac_u2);

struct WaldResult {
  Eigen::MatrixXd sigma;   // (1/n) sum S_i S_i^T
  Eigen::VectorXd ci_low;
  Eigen::VectorXd ci_high;
};

WaldResult wald(double ci_level, const InfluenceMatrix& infl,
                const Eigen::VectorXd& beta);

}  // namespace msmkit
