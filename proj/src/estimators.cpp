#include "msmkit/estimators.hpp"

#include <cmath>
#include <numeric>

namespace msmkit {

namespace {

Eigen::MatrixXd phi_rows(const TrajectoryDataset& ds, const WorkingModel& model) {
  Eigen::MatrixXd Phi(ds.n(), model.dim());
  for (int i = 0; i < ds.n(); ++i) Phi.row(i) = model.phi_observed(ds, i).transpose();
  return Phi;
}

Eigen::VectorXd column_means_stable(const Eigen::MatrixXd& M) {
  Eigen::VectorXd out(M.cols());
  std::vector<double> buf(M.rows());
  for (int c = 0; c < M.cols(); ++c) {
    for (int i = 0; i < M.rows(); ++i) buf[i] = M(i, c);
    out(c) = stable_mean(buf);
  }
  return out;
}

void weight_diagnostics(const Eigen::VectorXd& w, EstimateReport* report) {
  const double sw = w.sum();
  const double sw2 = w.squaredNorm();
  report->effective_sample_size = sw2 > 0 ? sw * sw / sw2 : 0.0;
  if (report->effective_sample_size < 0.1 * w.size()) {
    report->notes.push_back("positivity warning: effective sample size below n/10");
  }
}

Eigen::VectorXd product_weights(const Eigen::MatrixXd& ratios) {
  Eigen::VectorXd w = Eigen::VectorXd::Ones(ratios.rows());
  for (int t = 0; t < ratios.cols(); ++t) w = w.cwiseProduct(ratios.col(t));
  return w;
}

SequenceLattice make_lattice(const TrajectoryDataset& ds,
                             const ReferenceMeasure& lam,
                             const EstimatorOptions& opts) {
  return build_lattice(ds.support(), lam, ds, opts.lattice_mode, opts.mc_draws,
                       opts.seed, opts.lattice_cap);
}

}  // namespace

double tmle_fluctuation(const Eigen::VectorXd& residuals,
                        const Eigen::VectorXd& weights) {
  if (residuals.size() != weights.size()) {
    throw ContractError("tmle_fluctuation: length mismatch");
  }
  const double wsum = weights.sum();
  return wsum > 0 ? weights.dot(residuals) / wsum : 0.0;
}

Eigen::VectorXd ipw_beta_from_weights(const TrajectoryDataset& ds,
                                      const WorkingModel& model,
                                      const Eigen::VectorXd& weights,
                                      const EstimatorOptions& opts) {
  const Eigen::MatrixXd Phi = phi_rows(ds, model);
  const Eigen::VectorXd init = Eigen::VectorXd::Zero(model.dim());
  return solve_weighted_glm(model.link, Phi, ds.outcomes(), weights, init,
                            opts.tol, opts.max_iter)
      .beta;
}

EstimateReport fit_ipw(const TrajectoryDataset& ds, const ReferenceMeasure& lam,
                       const WorkingModel& model,
                       const std::vector<LearnerSpec>& g_specs,
                       const EstimatorOptions& opts,
                       const Eigen::VectorXd* injected_weights) {
  EstimateReport report;
  report.estimator = "ipw";
  report.n = ds.n();
  report.d = model.dim();
  report.ci_level = opts.ci_level;

  Eigen::VectorXd w;
  if (injected_weights != nullptr) {
    if (injected_weights->size() != ds.n()) {
      throw ContractError("fit_ipw: injected weight length mismatch");
    }
    w = *injected_weights;
    report.learner_info.push_back("weights: injected");
  } else {
    // g is fitted on the full sample; the paper's IPW has no cross-fitting.
    const RatioSet rs = build_ratio_set(ds, lam, single_fold(ds.n()), g_specs,
                                        opts.truncation);
    w = product_weights(rs.ratios);
    report.truncation_count = rs.truncation_count;
    report.min_fitted_g = rs.min_fitted_g;
    for (int t = 0; t < ds.tau(); ++t) {
      report.learner_info.push_back("g[t=" + std::to_string(t + 1) + "]: " +
                                    rs.g_info[t]);
    }
  }
  if (w.lpNorm<Eigen::Infinity>() <= 0.0) {
    throw SolverError("fit_ipw: degenerate weights (all zero)");
  }
  weight_diagnostics(w, &report);

  const Eigen::MatrixXd Phi = phi_rows(ds, model);
  const Eigen::VectorXd init = Eigen::VectorXd::Zero(model.dim());
  const NewtonResult sol = solve_weighted_glm(model.link, Phi, ds.outcomes(), w,
                                              init, opts.tol, opts.max_iter);
  report.beta = sol.beta;
  report.newton_iterations = sol.iterations;
  report.final_residual = sol.final_residual;

  if (opts.bootstrap > 0 && injected_weights != nullptr) {
    report.notes.push_back("bootstrap skipped: weights were injected");
  } else if (opts.bootstrap > 0) {
    // Nonparametric bootstrap with full re-estimation of the weights.
    Eigen::MatrixXd betas(opts.bootstrap, model.dim());
    int ok = 0;
    Rng rng(derive_seed(opts.seed, 0x626f6f74ULL));
    for (int b = 0; b < opts.bootstrap; ++b) {
      std::vector<Eigen::MatrixXd> cov;
      for (int t = 1; t <= ds.tau(); ++t) cov.push_back(Eigen::MatrixXd(ds.n(), ds.covariate_dim(t)));
      Eigen::MatrixXi treat(ds.n(), ds.tau());
      Eigen::VectorXd y(ds.n());
      for (int i = 0; i < ds.n(); ++i) {
        const int src = static_cast<int>(rng.below(ds.n()));
        for (int t = 1; t <= ds.tau(); ++t) {
          cov[t - 1].row(i) = ds.covariates(t).row(src);
          treat(i, t - 1) = ds.treatment(src, t);
        }
        y(i) = ds.outcome(src);
      }
      try {
        TrajectoryDataset boot(ds.tau(), cov, treat, y, ds.support(), ds.schema());
        EstimatorOptions sub = opts;
        sub.bootstrap = 0;
        const EstimateReport rep = fit_ipw(boot, lam, model, g_specs, sub);
        betas.row(ok++) = rep.beta.transpose();
      } catch (const Error&) {
        // skipped resample; recorded below
      }
    }
    if (ok >= 10) {
      const Eigen::MatrixXd B = betas.topRows(ok);
      const Eigen::VectorXd mean = B.colwise().mean();
      Eigen::MatrixXd centered = B.rowwise() - mean.transpose();
      report.sigma = (centered.transpose() * centered) / (ok - 1) * ds.n();
      report.has_sigma = true;
      const double z = std::abs(opts.ci_level - 0.95) < 1e-12
                           ? kZ975
                           : normal_quantile(0.5 + opts.ci_level / 2.0);
      report.ci_low.resize(model.dim());
      report.ci_high.resize(model.dim());
      for (int k = 0; k < model.dim(); ++k) {
        const double half = z * std::sqrt(report.sigma(k, k) / ds.n());
        report.ci_low(k) = report.beta(k) - half;
        report.ci_high(k) = report.beta(k) + half;
      }
      if (ok < opts.bootstrap) {
        report.notes.push_back("bootstrap: " + std::to_string(opts.bootstrap - ok) +
                               " resamples failed and were skipped");
      }
    } else {
      report.notes.push_back("bootstrap: too few successful resamples; no intervals");
    }
  }
  return report;
}

EstimateReport fit_gcomp(const TrajectoryDataset& ds,
                         const ReferenceMeasure& lam, const WorkingModel& model,
                         const std::vector<LearnerSpec>& outcome_specs,
                         const EstimatorOptions& opts) {
  EstimateReport report;
  report.estimator = "gcomp";
  report.n = ds.n();
  report.d = model.dim();
  report.ci_level = opts.ci_level;

  const NuisanceSet nuis = sequential_fit(ds, lam, model, nullptr,
                                          outcome_specs, SequentialMode::Plain);
  const Eigen::VectorXd u1 = column_means_stable(nuis.integrated[0]);
  report.outcome_moment = u1;
  for (int t = 0; t < ds.tau(); ++t) {
    report.learner_info.push_back("outcome[t=" + std::to_string(t + 1) + "]: " +
                                  nuis.outcome_info[t]);
  }

  // Initialize at the unweighted working-model fit (an IPW fit with unit
  // weights); the equation is monotone, so the solution is init-independent.
  const Eigen::VectorXd init =
      ipw_beta_from_weights(ds, model, Eigen::VectorXd::Ones(ds.n()), opts);
  const SequenceLattice lattice = make_lattice(ds, lam, opts);
  const NewtonResult sol =
      solve_working_model(model, lattice, u1, init, opts.tol, opts.max_iter);
  report.beta = sol.beta;
  report.newton_iterations = sol.iterations;
  report.final_residual = sol.final_residual;
  return report;
}

EstimateReport sdr_solve_from_nuisances(const TrajectoryDataset& ds,
                                        const ReferenceMeasure& lam,
                                        const WorkingModel& model,
                                        const NuisanceSet& nuis,
                                        const Eigen::VectorXd& beta_init,
                                        const EstimatorOptions& opts) {
  EstimateReport report;
  report.estimator = "sdr";
  report.n = ds.n();
  report.d = model.dim();
  report.ci_level = opts.ci_level;
  report.truncation_count = 0;

  const Eigen::MatrixXd D1 = nuis.pseudo_outcome_matrix(1);
  const Eigen::VectorXd u1 = column_means_stable(D1);
  report.outcome_moment = u1;

  const SequenceLattice lattice = make_lattice(ds, lam, opts);
  const MomentOperator op(model, lattice);
  const NewtonResult sol =
      newton_solve(op.system(), u1, beta_init, opts.tol, opts.max_iter);
  report.beta = sol.beta;
  report.newton_iterations = sol.iterations;
  report.final_residual = sol.final_residual;

  // U2's Jacobian is the negative of the moment Jacobian.
  const Eigen::MatrixXd jac_u2 = -op.jacobian(sol.beta);
  const InfluenceMatrix infl = eif_matrix(D1, u1, jac_u2);
  report.influence = infl.S;
  report.eif_colmean_max =
      column_means_stable(infl.S).lpNorm<Eigen::Infinity>();
  const WaldResult w = wald(opts.ci_level, infl, sol.beta);
  report.sigma = w.sigma;
  report.has_sigma = true;
  report.ci_low = w.ci_low;
  report.ci_high = w.ci_high;
  return report;
}

EstimateReport fit_sdr_with_ratios(const TrajectoryDataset& ds,
                                   const ReferenceMeasure& lam,
                                   const WorkingModel& model,
                                   const RatioSet& ratios,
                                   const std::vector<LearnerSpec>& outcome_specs,
                                   const EstimatorOptions& opts) {
  const Eigen::VectorXd w = product_weights(ratios.ratios);
  const Eigen::VectorXd beta_ipw = ipw_beta_from_weights(ds, model, w, opts);
  const NuisanceSet nuis = sequential_fit(ds, lam, model, &ratios,
                                          outcome_specs, SequentialMode::Sdr);
  EstimateReport report =
      sdr_solve_from_nuisances(ds, lam, model, nuis, beta_ipw, opts);
  report.truncation_count = ratios.truncation_count;
  report.min_fitted_g = ratios.min_fitted_g;
  weight_diagnostics(w, &report);
  for (int t = 0; t < ds.tau(); ++t) {
    if (!ratios.g_info.empty()) {
      report.learner_info.push_back("g[t=" + std::to_string(t + 1) + "]: " +
                                    ratios.g_info[t]);
    }
    report.learner_info.push_back("outcome[t=" + std::to_string(t + 1) + "]: " +
                                  nuis.outcome_info[t]);
  }
  return report;
}

EstimateReport fit_sdr(const TrajectoryDataset& ds, const ReferenceMeasure& lam,
                       const WorkingModel& model,
                       const std::vector<LearnerSpec>& g_specs,
                       const std::vector<LearnerSpec>& outcome_specs,
                       const FoldAssignment& folds,
                       const EstimatorOptions& opts) {
  const RatioSet ratios =
      build_ratio_set(ds, lam, folds, g_specs, opts.truncation);
  return fit_sdr_with_ratios(ds, lam, model, ratios, outcome_specs, opts);
}

EstimateReport fit_tmle_with_ratios(const TrajectoryDataset& ds,
                                    const ReferenceMeasure& lam,
                                    const WorkingModel& model,
                                    const RatioSet& ratios,
                                    const std::vector<LearnerSpec>& outcome_specs,
                                    const EstimatorOptions& opts) {
  const int n = ds.n();
  const int tau = ds.tau();
  const int d = model.dim();
  EstimateReport report;
  report.estimator = "tmle";
  report.n = n;
  report.d = d;
  report.ci_level = opts.ci_level;
  report.truncation_count = ratios.truncation_count;
  report.min_fitted_g = ratios.min_fitted_g;

  const Eigen::VectorXd w_all = product_weights(ratios.ratios);
  const Eigen::VectorXd beta_ipw = ipw_beta_from_weights(ds, model, w_all, opts);
  weight_diagnostics(w_all, &report);

  const FoldAssignment& folds = ratios.folds;
  NuisanceSet nuis;  // holds the fluctuated regressions for the EIF step
  nuis.tau = tau;
  nuis.d = d;
  nuis.ratios = ratios.ratios;
  nuis.folds = folds;
  nuis.trunc_bound = ratios.trunc_bound;
  nuis.regression.assign(tau, Eigen::MatrixXd::Zero(n, d));
  nuis.integrated.assign(tau + 1, Eigen::MatrixXd::Zero(n, d));
  nuis.integrated[tau] = outcome_feature_rows(ds, model);
  nuis.outcome_info.resize(tau);
  nuis.train_rows_used.assign(tau, {});

  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);

  // Cumulated future weights prod_{s=t}^tau r_s for the fluctuation step.
  Eigen::VectorXd future_w = Eigen::VectorXd::Ones(n);

  Eigen::MatrixXd pseudo = nuis.integrated[tau];  // fluctuated Tbar*_{t+1}
  for (int t = tau; t >= 1; --t) {
    const Eigen::MatrixXd Xfull = outcome_design(ds, t, all);
    const int K = ds.support().n_levels(t);
    future_w = future_w.cwiseProduct(ratios.ratios.col(t - 1));
    nuis.train_rows_used[t - 1].resize(folds.J);
    for (int j = 0; j < folds.J; ++j) {
      const std::vector<int> train = training_rows(folds, j);
      const std::vector<int> valid = folds.fold_rows(j);
      nuis.train_rows_used[t - 1][j] = train;
      Eigen::MatrixXd Xtr(train.size(), Xfull.cols());
      for (std::size_t r = 0; r < train.size(); ++r) Xtr.row(static_cast<int>(r)) = Xfull.row(train[r]);
      Eigen::MatrixXd Xva(valid.size(), Xfull.cols());
      for (std::size_t r = 0; r < valid.size(); ++r) Xva.row(static_cast<int>(r)) = Xfull.row(valid[r]);
      std::vector<Eigen::MatrixXd> Xcf_levels(K);
      for (int a = 0; a < K; ++a) {
        Xcf_levels[a] = outcome_design_at_level(ds, t, valid,
                                                ds.support().levels[t - 1][a]);
      }
      for (int c = 0; c < d; ++c) {
        Eigen::VectorXd ytr(train.size());
        for (std::size_t r = 0; r < train.size(); ++r) ytr(static_cast<int>(r)) = pseudo(train[r], c);
        CvSelection sel;
        FittedPtr fit;
        try {
          fit = fit_regression_auto(outcome_specs[t - 1], Xtr, ytr, &sel);
        } catch (const Error& e) {
          throw ContractError("outcome regression at time " + std::to_string(t) +
                              ": " + e.what());
        }
        if (j == 0 && c == 0) {
          nuis.outcome_info[t - 1] =
              outcome_specs[t - 1].kind == LearnerKind::Stack
                  ? outcome_specs[t - 1].stack[sel.chosen].describe()
                  : outcome_specs[t - 1].describe();
        }
        const Eigen::VectorXd obs_pred = fit->predict(Xva);
        for (std::size_t r = 0; r < valid.size(); ++r) {
          nuis.regression[t - 1](valid[r], c) = obs_pred(static_cast<int>(r));
        }
        Eigen::MatrixXd level_preds(valid.size(), K);
        for (int a = 0; a < K; ++a) {
          level_preds.col(a) = fit->predict(Xcf_levels[a]);
        }
        for (std::size_t r = 0; r < valid.size(); ++r) {
          const int i = valid[r];
          nuis.integrated[t - 1](i, c) =
              level_preds.row(static_cast<int>(r))
                  .dot(ratios.lam_pmf[t - 1].row(i));
        }
      }
    }
    // Intercept fluctuation: epsilon is the weighted mean residual of the
    // pseudo-outcome against the fitted regression, one scalar per component.
    for (int c = 0; c < d; ++c) {
      const Eigen::VectorXd resid = pseudo.col(c) - nuis.regression[t - 1].col(c);
      const double eps = tmle_fluctuation(resid, future_w);
      nuis.regression[t - 1].col(c).array() += eps;
      nuis.integrated[t - 1].col(c).array() += eps;
    }
    pseudo = nuis.integrated[t - 1];
  }

  const Eigen::VectorXd u1 = column_means_stable(nuis.integrated[0]);
  report.outcome_moment = u1;
  const SequenceLattice lattice = make_lattice(ds, lam, opts);
  const MomentOperator op(model, lattice);
  const NewtonResult sol =
      newton_solve(op.system(), u1, beta_ipw, opts.tol, opts.max_iter);
  report.beta = sol.beta;
  report.newton_iterations = sol.iterations;
  report.final_residual = sol.final_residual;

  // Wald inference from the pseudo-outcome evaluated at the fluctuated
  // nuisances, centered at its own sample mean.
  const Eigen::MatrixXd D1 = nuis.pseudo_outcome_matrix(1);
  const Eigen::VectorXd d1_mean = column_means_stable(D1);
  const Eigen::MatrixXd jac_u2 = -op.jacobian(sol.beta);
  const InfluenceMatrix infl = eif_matrix(D1, d1_mean, jac_u2);
  report.influence = infl.S;
  report.eif_colmean_max =
      column_means_stable(infl.S).lpNorm<Eigen::Infinity>();
  const WaldResult w = wald(opts.ci_level, infl, sol.beta);
  report.sigma = w.sigma;
  report.has_sigma = true;
  report.ci_low = w.ci_low;
  report.ci_high = w.ci_high;
  for (int t = 0; t < tau; ++t) {
    if (!ratios.g_info.empty()) {
      report.learner_info.push_back("g[t=" + std::to_string(t + 1) + "]: " +
                                    ratios.g_info[t]);
    }
    report.learner_info.push_back("outcome[t=" + std::to_string(t + 1) + "]: " +
                                  nuis.outcome_info[t]);
  }
  return report;
}

EstimateReport fit_tmle(const TrajectoryDataset& ds, const ReferenceMeasure& lam,
                        const WorkingModel& model,
                        const std::vector<LearnerSpec>& g_specs,
                        const std::vector<LearnerSpec>& outcome_specs,
                        const FoldAssignment& folds,
                        const EstimatorOptions& opts) {
  const RatioSet ratios =
      build_ratio_set(ds, lam, folds, g_specs, opts.truncation);
  return fit_tmle_with_ratios(ds, lam, model, ratios, outcome_specs, opts);
}

}  // namespace msmkit
