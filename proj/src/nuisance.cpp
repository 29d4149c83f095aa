#include "msmkit/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace msmkit {

double density_ratio(double lam_prob, double g_prob, double c) {
  const double g = std::max(g_prob, kPmfFloor);
  return std::min(lam_prob / g, c);
}

namespace {

int onehot_width(const TreatmentSupport& support, int t) {
  return support.n_levels(t) - 1;  // first level is the reference
}

}  // namespace

Eigen::MatrixXd history_design(const TrajectoryDataset& ds, int t,
                               const std::vector<int>& rows) {
  const auto& support = ds.support();
  int p = 0;
  for (int s = 1; s <= t - 1; ++s) p += onehot_width(support, s);
  for (int s = 1; s <= t; ++s) p += ds.covariate_dim(s);
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(rows.size(), p);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int i = rows[r];
    int col = 0;
    for (int s = 1; s <= t - 1; ++s) {
      const int idx = support.level_index(s, ds.treatment(i, s));
      if (idx > 0) X(static_cast<int>(r), col + idx - 1) = 1.0;
      col += onehot_width(support, s);
    }
    for (int s = 1; s <= t; ++s) {
      const auto& block = ds.covariates(s);
      for (int j = 0; j < block.cols(); ++j) X(static_cast<int>(r), col++) = block(i, j);
    }
  }
  return X;
}

namespace {

// override_level < 0 means "use the observed treatment at time t".
Eigen::MatrixXd outcome_design_impl(const TrajectoryDataset& ds, int t,
                                    const std::vector<int>& rows,
                                    int override_level) {
  const auto& support = ds.support();
  const int w = onehot_width(support, t);
  const Eigen::MatrixXd H = history_design(ds, t, rows);
  int oh_past = 0;
  for (int s = 1; s <= t - 1; ++s) oh_past += onehot_width(support, s);
  const int n_cov = static_cast<int>(H.cols()) - oh_past;
  const int n_numeric = t + n_cov;  // treatment codes a_1..a_t, then L_1..L_t
  const int n_pairs = n_numeric * (n_numeric - 1) / 2;

  Eigen::MatrixXd X(H.rows(), w + H.cols() + n_numeric + n_pairs);
  Eigen::VectorXd numeric(n_numeric);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int i = rows[r];
    const int code = override_level >= 0 ? override_level : ds.treatment(i, t);
    const int idx = support.level_index(t, code);
    int col = 0;
    for (int k = 0; k < w; ++k) X(static_cast<int>(r), col++) = (idx - 1 == k) ? 1.0 : 0.0;
    for (int c = 0; c < H.cols(); ++c) X(static_cast<int>(r), col++) = H(static_cast<int>(r), c);
    int np = 0;
    for (int s = 1; s <= t - 1; ++s) numeric(np++) = ds.treatment(i, s);
    numeric(np++) = code;
    for (int c = 0; c < n_cov; ++c) numeric(np++) = H(static_cast<int>(r), oh_past + c);
    for (int u = 0; u < n_numeric; ++u) X(static_cast<int>(r), col++) = numeric(u);
    for (int u = 0; u < n_numeric; ++u) {
      for (int v = u + 1; v < n_numeric; ++v) {
        X(static_cast<int>(r), col++) = numeric(u) * numeric(v);
      }
    }
  }
  return X;
}

}  // namespace

Eigen::MatrixXd outcome_design(const TrajectoryDataset& ds, int t,
                               const std::vector<int>& rows) {
  return outcome_design_impl(ds, t, rows, -1);
}

Eigen::MatrixXd outcome_design_at_level(const TrajectoryDataset& ds, int t,
                                        const std::vector<int>& rows,
                                        int level_code) {
  ds.support().level_index(t, level_code);  // validates the code
  return outcome_design_impl(ds, t, rows, level_code);
}

FittedPtr fit_treatment_pmf(const TrajectoryDataset& ds, int t,
                            const LearnerSpec& spec,
                            const std::vector<int>& train_rows,
                            CvSelection* info) {
  if (train_rows.empty()) throw ContractError("fit_treatment_pmf: empty training set");
  const auto& support = ds.support();
  const int K = support.n_levels(t);
  const Eigen::MatrixXd X = history_design(ds, t, train_rows);
  std::vector<int> labels(train_rows.size());
  for (std::size_t r = 0; r < train_rows.size(); ++r) {
    labels[r] = support.level_index(t, ds.treatment(train_rows[r], t));
  }
  return fit_pmf_auto(spec, X, labels, K, info);
}

Eigen::VectorXd integrate_tbar(const Eigen::MatrixXd& per_level_values,
                               const Eigen::VectorXd& lam_pmf) {
  if (per_level_values.rows() != lam_pmf.size()) {
    throw ContractError("integrate_tbar: level count mismatch");
  }
  return per_level_values.transpose() * lam_pmf;
}

RatioSet build_ratio_set(const TrajectoryDataset& ds, const ReferenceMeasure& lam,
                         const FoldAssignment& folds,
                         const std::vector<LearnerSpec>& g_specs, double c) {
  const int n = ds.n();
  const int tau = ds.tau();
  if (static_cast<int>(g_specs.size()) != tau) {
    throw ContractError("build_ratio_set: need one learner spec per time point");
  }
  if (folds.n != n) throw ContractError("build_ratio_set: fold assignment size mismatch");

  RatioSet rs;
  rs.folds = folds;
  rs.trunc_bound = c;
  rs.ratios.resize(n, tau);
  rs.lam_pmf.resize(tau);
  rs.g_info.resize(tau);
  for (int t = 1; t <= tau; ++t) {
    rs.lam_pmf[t - 1].resize(n, ds.support().n_levels(t));
  }

  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);

  for (int j = 0; j < folds.J; ++j) {
    const std::vector<int> train = training_rows(folds, j);
    const std::vector<int> valid = folds.fold_rows(j);
    const ReferenceMeasure lam_j = lam.refit(ds, train);
    for (int t = 1; t <= tau; ++t) {
      CvSelection sel;
      FittedPtr g_hat;
      try {
        g_hat = fit_treatment_pmf(ds, t, g_specs[t - 1], train, &sel);
      } catch (const Error& e) {
        throw ContractError("treatment model at time " + std::to_string(t) +
                            ": " + e.what());
      }
      if (j == 0) {
        rs.g_info[t - 1] =
            g_specs[t - 1].kind == LearnerKind::Stack
                ? g_specs[t - 1].stack[sel.chosen].describe()
                : g_specs[t - 1].describe();
      }
      const Eigen::MatrixXd X = history_design(ds, t, valid);
      const Eigen::MatrixXd G = g_hat->predict_pmf(X);
      std::vector<int> abar_prev;
      for (std::size_t r = 0; r < valid.size(); ++r) {
        const int i = valid[r];
        abar_prev.clear();
        for (int s = 1; s <= t - 1; ++s) abar_prev.push_back(ds.treatment(i, s));
        const Eigen::VectorXd lp = lam_j.pmf(t, abar_prev, ds.baseline(i));
        rs.lam_pmf[t - 1].row(i) = lp.transpose();
        const int idx = ds.support().level_index(t, ds.treatment(i, t));
        const double g_obs = G(static_cast<int>(r), idx);
        rs.min_fitted_g = std::min(rs.min_fitted_g, g_obs);
        const double raw = lp(idx) / std::max(g_obs, kPmfFloor);
        if (raw > c) ++rs.truncation_count;
        rs.ratios(i, t - 1) = std::min(raw, c);
      }
    }
  }
  return rs;
}

RatioSet ratio_set_from_values(const TrajectoryDataset& ds,
                               const ReferenceMeasure& lam,
                               Eigen::MatrixXd ratios, double c) {
  const int n = ds.n();
  const int tau = ds.tau();
  if (ratios.rows() != n || ratios.cols() != tau) {
    throw ContractError("ratio_set_from_values: shape mismatch");
  }
  RatioSet rs;
  rs.folds = single_fold(n);
  rs.trunc_bound = c;
  rs.ratios = std::move(ratios);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < tau; ++t) {
      if (rs.ratios(i, t) > c) {
        rs.ratios(i, t) = c;
        ++rs.truncation_count;
      }
    }
  }
  rs.lam_pmf.resize(tau);
  std::vector<int> abar_prev;
  for (int t = 1; t <= tau; ++t) {
    rs.lam_pmf[t - 1].resize(n, ds.support().n_levels(t));
    for (int i = 0; i < n; ++i) {
      abar_prev.clear();
      for (int s = 1; s <= t - 1; ++s) abar_prev.push_back(ds.treatment(i, s));
      rs.lam_pmf[t - 1].row(i) = lam.pmf(t, abar_prev, ds.baseline(i)).transpose();
    }
  }
  return rs;
}

Eigen::MatrixXd outcome_feature_rows(const TrajectoryDataset& ds,
                                     const WorkingModel& model) {
  Eigen::MatrixXd out(ds.n(), model.dim());
  for (int i = 0; i < ds.n(); ++i) {
    out.row(i) = ds.outcome(i) * model.phi_observed(ds, i).transpose();
  }
  return out;
}

Eigen::VectorXd NuisanceSet::pseudo_outcome(int i, int t) const {
  if (t < 1 || t > tau + 1) throw ContractError("pseudo_outcome: time out of range");
  if (t == tau + 1) return integrated[tau].row(i).transpose();
  if (ratios.size() == 0) {
    throw ContractError("pseudo_outcome: nuisance set has no density ratios");
  }
  Eigen::VectorXd out = integrated[t - 1].row(i).transpose();
  double rprod = 1.0;
  for (int s = t; s <= tau; ++s) {
    rprod *= ratios(i, s - 1);
    out += rprod * (integrated[s].row(i) - regression[s - 1].row(i)).transpose();
  }
  return out;
}

Eigen::MatrixXd NuisanceSet::pseudo_outcome_matrix(int t) const {
  Eigen::MatrixXd out(n(), d);
  for (int i = 0; i < n(); ++i) out.row(i) = pseudo_outcome(i, t).transpose();
  return out;
}

NuisanceSet sequential_fit(const TrajectoryDataset& ds,
                           const ReferenceMeasure& lam,
                           const WorkingModel& model, const RatioSet* ratios,
                           const std::vector<LearnerSpec>& outcome_specs,
                           SequentialMode mode) {
  const int n = ds.n();
  const int tau = ds.tau();
  const int d = model.dim();
  if (static_cast<int>(outcome_specs.size()) != tau) {
    throw ContractError("sequential_fit: need one learner spec per time point");
  }
  if (mode == SequentialMode::Sdr && ratios == nullptr) {
    throw ContractError("sequential_fit: sdr mode requires a ratio set");
  }

  NuisanceSet nuis;
  nuis.tau = tau;
  nuis.d = d;
  nuis.folds = (mode == SequentialMode::Sdr) ? ratios->folds : single_fold(n);
  if (mode == SequentialMode::Sdr) {
    nuis.ratios = ratios->ratios;
    nuis.trunc_bound = ratios->trunc_bound;
  }
  nuis.regression.assign(tau, Eigen::MatrixXd::Zero(n, d));
  nuis.integrated.assign(tau + 1, Eigen::MatrixXd::Zero(n, d));
  nuis.integrated[tau] = outcome_feature_rows(ds, model);
  nuis.outcome_info.resize(tau);
  nuis.train_rows_used.assign(tau, {});

  // Lambda values for the exact integration step. In sdr mode these are the
  // cross-fitted ones from the ratio set; in plain mode the global measure.
  std::vector<Eigen::MatrixXd> lam_pmf;
  if (mode == SequentialMode::Sdr) {
    lam_pmf = ratios->lam_pmf;
  } else {
    lam_pmf.resize(tau);
    std::vector<int> abar_prev;
    for (int t = 1; t <= tau; ++t) {
      lam_pmf[t - 1].resize(n, ds.support().n_levels(t));
      for (int i = 0; i < n; ++i) {
        abar_prev.clear();
        for (int s = 1; s <= t - 1; ++s) abar_prev.push_back(ds.treatment(i, s));
        lam_pmf[t - 1].row(i) = lam.pmf(t, abar_prev, ds.baseline(i)).transpose();
      }
    }
  }

  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);

  Eigen::MatrixXd pseudo = nuis.integrated[tau];  // D_{t+1} (sdr) or Tbar_{t+1}
  for (int t = tau; t >= 1; --t) {
    const Eigen::MatrixXd Xfull = outcome_design(ds, t, all);
    const int K = ds.support().n_levels(t);
    nuis.train_rows_used[t - 1].resize(nuis.folds.J);
    for (int j = 0; j < nuis.folds.J; ++j) {
      const std::vector<int> train = training_rows(nuis.folds, j);
      const std::vector<int> valid = nuis.folds.fold_rows(j);
      nuis.train_rows_used[t - 1][j] = train;
      Eigen::MatrixXd Xtr(train.size(), Xfull.cols());
      for (std::size_t r = 0; r < train.size(); ++r) {
        Xtr.row(static_cast<int>(r)) = Xfull.row(train[r]);
      }
      Eigen::MatrixXd Xva(valid.size(), Xfull.cols());
      for (std::size_t r = 0; r < valid.size(); ++r) {
        Xva.row(static_cast<int>(r)) = Xfull.row(valid[r]);
      }
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
              level_preds.row(static_cast<int>(r)).dot(lam_pmf[t - 1].row(i));
        }
      }
    }
    if (mode == SequentialMode::Sdr) {
      for (int c = 0; c < d; ++c) {
        pseudo.col(c) = nuis.ratios.col(t - 1).cwiseProduct(
                            pseudo.col(c) - nuis.regression[t - 1].col(c)) +
                        nuis.integrated[t - 1].col(c);
      }
    } else {
      pseudo = nuis.integrated[t - 1];
    }
  }
  return nuis;
}

}  // namespace msmkit
