#include "msmkit/solver.hpp"

#include <cmath>

namespace msmkit {

NewtonResult newton_solve(const MomentSystem& system,
                          const Eigen::VectorXd& target,
                          const Eigen::VectorXd& init, double tol,
                          int max_iter) {
  if (target.size() != system.dim || init.size() != system.dim) {
    throw ContractError("newton_solve: dimension mismatch");
  }
  Eigen::VectorXd beta = init;
  Eigen::VectorXd resid = target - system.value(beta);
  double rnorm = resid.lpNorm<Eigen::Infinity>();
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    if (rnorm <= tol) {
      return NewtonResult{beta, iter, rnorm};
    }
    const Eigen::MatrixXd jac = system.jacobian(beta);
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(
        jac, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (!(smin > 0) || smax / smin > 1e14) {
      throw SolverError("singular Jacobian in Newton step (condition ~" +
                            std::to_string(smax / std::max(smin, 1e-300)) + ")",
                        rnorm, iter);
    }
    const Eigen::VectorXd step = svd.solve(resid);
    // Damped update: halve the step until the residual decreases.
    double scale = 1.0;
    bool moved = false;
    for (int half = 0; half < 40; ++half) {
      const Eigen::VectorXd cand = beta + scale * step;
      const Eigen::VectorXd cand_resid = target - system.value(cand);
      const double cand_norm = cand_resid.lpNorm<Eigen::Infinity>();
      if (cand_norm < rnorm || cand_norm <= tol) {
        beta = cand;
        resid = cand_resid;
        rnorm = cand_norm;
        moved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!moved) {
      throw SolverError("Newton iteration stalled (residual " +
                            std::to_string(rnorm) + ")",
                        rnorm, iter);
    }
  }
  if (rnorm <= tol) return NewtonResult{beta, iter, rnorm};
  throw SolverError("Newton did not converge in " + std::to_string(max_iter) +
                        " iterations (residual " + std::to_string(rnorm) + ")",
                    rnorm, max_iter);
}

MomentOperator::MomentOperator(const WorkingModel& model,
                               const SequenceLattice& lattice)
    : link_(model.link), d_(model.dim()) {
  groups_.reserve(lattice.groups.size());
  std::vector<int> path(model.features.tau());
  for (const auto& g : lattice.groups) {
    GroupCache cache;
    cache.mass = g.mass;
    cache.weights = g.weights;
    const Eigen::MatrixXi& paths = lattice.paths(g);
    cache.phis.resize(paths.rows(), d_);
    for (long p = 0; p < paths.rows(); ++p) {
      for (int t = 0; t < paths.cols(); ++t) path[t] = paths(p, t);
      cache.phis.row(p) = model.phi(path, g.v).transpose();
    }
    groups_.push_back(std::move(cache));
  }
}

Eigen::VectorXd MomentOperator::moment(const Eigen::VectorXd& gamma) const {
  if (gamma.size() != d_) throw ContractError("model moment: gamma has wrong dimension");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d_);
  for (const auto& g : groups_) {
    const Eigen::VectorXd eta = g.phis * gamma;
    Eigen::VectorXd mw(eta.size());
    for (int p = 0; p < eta.size(); ++p) {
      mw(p) = link_value(link_, eta(p)) * g.weights(p);
    }
    out.noalias() += g.mass * (g.phis.transpose() * mw);
  }
  return out;
}

Eigen::MatrixXd MomentOperator::jacobian(const Eigen::VectorXd& gamma) const {
  if (gamma.size() != d_) throw ContractError("model moment: gamma has wrong dimension");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d_, d_);
  for (const auto& g : groups_) {
    const Eigen::VectorXd eta = g.phis * gamma;
    Eigen::VectorXd sw(eta.size());
    for (int p = 0; p < eta.size(); ++p) {
      sw(p) = link_slope(link_, eta(p)) * g.weights(p);
    }
    out.noalias() += g.mass * (g.phis.transpose() * sw.asDiagonal() * g.phis);
  }
  return out;
}

MomentSystem MomentOperator::system() const {
  MomentSystem sys;
  sys.dim = d_;
  sys.value = [this](const Eigen::VectorXd& g) { return moment(g); };
  sys.jacobian = [this](const Eigen::VectorXd& g) { return jacobian(g); };
  return sys;
}

Eigen::VectorXd model_moment(const WorkingModel& model,
                             const SequenceLattice& lattice,
                             const Eigen::VectorXd& gamma) {
  return MomentOperator(model, lattice).moment(gamma);
}

Eigen::MatrixXd model_moment_jacobian(const WorkingModel& model,
                                      const SequenceLattice& lattice,
                                      const Eigen::VectorXd& gamma) {
  return MomentOperator(model, lattice).jacobian(gamma);
}

NewtonResult solve_working_model(const WorkingModel& model,
                                 const SequenceLattice& lattice,
                                 const Eigen::VectorXd& outcome_moment,
                                 const Eigen::VectorXd& init, double tol,
                                 int max_iter) {
  if (!outcome_moment.allFinite()) {
    throw ContractError("solve_working_model: non-finite outcome moment");
  }
  const MomentOperator op(model, lattice);
  return newton_solve(op.system(), outcome_moment, init, tol, max_iter);
}

NewtonResult solve_weighted_glm(LinkKind link, const Eigen::MatrixXd& Phi,
                                const Eigen::VectorXd& y,
                                const Eigen::VectorXd& w,
                                const Eigen::VectorXd& init, double tol,
                                int max_iter) {
  const int n = static_cast<int>(Phi.rows());
  const int d = static_cast<int>(Phi.cols());
  if (y.size() != n || w.size() != n) {
    throw ContractError("solve_weighted_glm: length mismatch");
  }
  if (w.lpNorm<Eigen::Infinity>() <= 0) {
    throw SolverError("degenerate weights: all zero");
  }
  MomentSystem sys;
  sys.dim = d;
  sys.value = [&, n](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = Phi * beta;
    Eigen::VectorXd mw(n);
    for (int i = 0; i < n; ++i) mw(i) = w(i) * link_value(link, eta(i));
    return Eigen::VectorXd((Phi.transpose() * mw) / n);
  };
  sys.jacobian = [&, n](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = Phi * beta;
    Eigen::VectorXd sw(n);
    for (int i = 0; i < n; ++i) sw(i) = w(i) * link_slope(link, eta(i));
    return Eigen::MatrixXd((Phi.transpose() * sw.asDiagonal() * Phi) / n);
  };
  const Eigen::VectorXd target = (Phi.transpose() * w.cwiseProduct(y)) / n;
  return newton_solve(sys, target, init, tol, max_iter);
}

}  // namespace msmkit
