#pragma once

#include <Eigen/Dense>
#include <functional>

#include "msmkit/lattice.hpp"

namespace msmkit {

inline constexpr double kDefaultSolverTol = 1e-8;
inline constexpr int kDefaultSolverMaxIter = 100;

struct NewtonResult {
  Eigen::VectorXd beta;
  int iterations = 0;
  double final_residual = 0.0;
};

// A differentiable moment map gamma -> E[m(gamma . phi) phi] together with
// its (positive semidefinite, for canonical pairs) Jacobian.
struct MomentSystem {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> value;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
  int dim = 0;
};

// Solves value(beta) = target by damped Newton iteration. The estimating
// equation residual reported is ||target - value(beta)||_inf.
NewtonResult newton_solve(const MomentSystem& system,
                          const Eigen::VectorXd& target,
                          const Eigen::VectorXd& init,
                          double tol = kDefaultSolverTol,
                          int max_iter = kDefaultSolverMaxIter);

// Precomputes feature values over a lattice so repeated moment evaluations
// inside the Newton loop are cheap.
class MomentOperator {
 public:
  MomentOperator(const WorkingModel& model, const SequenceLattice& lattice);

  // E_Lambda,n [ m(gamma . phi) phi ]; the spec's U_2(gamma) is its negative.
  Eigen::VectorXd moment(const Eigen::VectorXd& gamma) const;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& gamma) const;

  MomentSystem system() const;
  int dim() const { return d_; }

 private:
  struct GroupCache {
    double mass;
    Eigen::VectorXd weights;
    Eigen::MatrixXd phis;  // paths x d
  };
  std::vector<GroupCache> groups_;
  LinkKind link_;
  int d_;
};

// Convenience wrappers matching the per-operation contracts.
Eigen::VectorXd model_moment(const WorkingModel& model,
                             const SequenceLattice& lattice,
                             const Eigen::VectorXd& gamma);
Eigen::MatrixXd model_moment_jacobian(const WorkingModel& model,
                                      const SequenceLattice& lattice,
                                      const Eigen::VectorXd& gamma);

// Solves E_Lambda,n[m(beta . phi) phi] = outcome_moment starting from init.
NewtonResult solve_working_model(const WorkingModel& model,
                                 const SequenceLattice& lattice,
                                 const Eigen::VectorXd& outcome_moment,
                                 const Eigen::VectorXd& init,
                                 double tol = kDefaultSolverTol,
                                 int max_iter = kDefaultSolverMaxIter);

// Weighted sample GLM system: value(beta) = (1/n) sum_i w_i m(beta.phi_i) phi_i,
// solved against target (1/n) sum_i w_i y_i phi_i by the same Newton core.
// This is the inverse-probability-weighted estimating equation.
NewtonResult solve_weighted_glm(LinkKind link, const Eigen::MatrixXd& Phi,
                                const Eigen::VectorXd& y,
                                const Eigen::VectorXd& w,
                                const Eigen::VectorXd& init,
                                double tol = kDefaultSolverTol,
                                int max_iter = kDefaultSolverMaxIter);

}  // namespace msmkit
