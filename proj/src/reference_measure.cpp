#include "msmkit/reference_measure.hpp"

#include <numeric>

namespace msmkit {

Eigen::VectorXd ReferenceMeasure::pmf(int t, const std::vector<int>& abar_prev,
                                      const Eigen::VectorXd&) const {
  if (t < 1 || t > tau()) throw ContractError("reference measure: time out of range");
  if (provenance_ == LambdaProvenance::FittedConditional && t > 1) {
    Eigen::MatrixXd x(1, t - 1);
    if (static_cast<int>(abar_prev.size()) < t - 1) {
      throw ContractError("reference measure: abar_prev too short");
    }
    for (int s = 0; s < t - 1; ++s) x(0, s) = abar_prev[s];
    return conditional_[t - 1]->predict_pmf(x).row(0).transpose();
  }
  return marginal_[t - 1];
}

double ReferenceMeasure::prob(int t, int code, const std::vector<int>& abar_prev,
                              const Eigen::VectorXd& v) const {
  return pmf(t, abar_prev, v)(support_.level_index(t, code));
}

ReferenceMeasure ReferenceMeasure::fixed(TreatmentSupport support,
                                         std::vector<Eigen::VectorXd> pmfs) {
  support.validate();
  if (static_cast<int>(pmfs.size()) != support.tau()) {
    throw ContractError("fixed reference measure: need one pmf per time point");
  }
  for (int t = 1; t <= support.tau(); ++t) {
    auto& p = pmfs[t - 1];
    if (static_cast<int>(p.size()) != support.n_levels(t)) {
      throw ContractError("fixed reference measure: pmf size != support size");
    }
    if (p.minCoeff() < 0) throw ContractError("reference measure: negative pmf");
    const double total = p.sum();
    if (std::abs(total - 1.0) > 1e-8) {
      throw ContractError("reference measure: pmf must sum to 1");
    }
    p /= total;
  }
  ReferenceMeasure lam;
  lam.provenance_ = LambdaProvenance::Fixed;
  lam.support_ = std::move(support);
  lam.marginal_ = std::move(pmfs);
  return lam;
}

ReferenceMeasure ReferenceMeasure::fit_on_rows(const TrajectoryDataset& ds,
                                               const std::vector<int>& rows,
                                               LambdaProvenance prov) {
  if (rows.empty()) throw ContractError("reference measure: empty row set");
  ReferenceMeasure lam;
  lam.provenance_ = prov;
  lam.support_ = ds.support();
  const int tau = ds.tau();
  lam.marginal_.resize(tau);
  for (int t = 1; t <= tau; ++t) {
    const int K = lam.support_.n_levels(t);
    Eigen::VectorXd freq = Eigen::VectorXd::Zero(K);
    for (int i : rows) freq(lam.support_.level_index(t, ds.treatment(i, t))) += 1.0;
    // Keep every supported level reachable even if unobserved in this fold.
    freq.array() += 1e-9;
    lam.marginal_[t - 1] = freq / freq.sum();
  }
  if (prov == LambdaProvenance::FittedConditional) {
    lam.conditional_.resize(tau);
    for (int t = 2; t <= tau; ++t) {
      const int K = lam.support_.n_levels(t);
      Eigen::MatrixXd X(rows.size(), t - 1);
      std::vector<int> labels(rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        for (int s = 1; s <= t - 1; ++s) X(static_cast<int>(r), s - 1) = ds.treatment(rows[r], s);
        labels[r] = lam.support_.level_index(t, ds.treatment(rows[r], t));
      }
      lam.conditional_[t - 1] = fit_pmf(LearnerSpec::softmax(), X, labels, K);
    }
  }
  return lam;
}

ReferenceMeasure ReferenceMeasure::fitted_marginal(const TrajectoryDataset& ds) {
  std::vector<int> all(ds.n());
  std::iota(all.begin(), all.end(), 0);
  return fit_on_rows(ds, all, LambdaProvenance::FittedMarginal);
}

ReferenceMeasure ReferenceMeasure::fitted_conditional(const TrajectoryDataset& ds) {
  std::vector<int> all(ds.n());
  std::iota(all.begin(), all.end(), 0);
  return fit_on_rows(ds, all, LambdaProvenance::FittedConditional);
}

ReferenceMeasure ReferenceMeasure::refit(const TrajectoryDataset& ds,
                                         const std::vector<int>& rows) const {
  if (provenance_ == LambdaProvenance::Fixed) return *this;
  return fit_on_rows(ds, rows, provenance_);
}

}  // namespace msmkit
