#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "msmkit/dataset.hpp"
#include "msmkit/learners.hpp"

namespace msmkit {

enum class LambdaProvenance { Fixed, FittedMarginal, FittedConditional };

// The reference treatment distribution Lambda: per-time conditional pmfs
// lambda_t(a_t | abar_{t-1}, v) over the support. Its v-marginal is always
// the empirical distribution of V in the dataset a fit runs on, so only the
// treatment factors are stored here.
//
//   Fixed             user-supplied per-time pmf vectors (unconditional)
//   FittedMarginal    empirical marginal pmf of A_t
//   FittedConditional softmax of A_t on past treatment codes (intercept +
//                     numeric A_1..A_{t-1})
class ReferenceMeasure {
 public:
  // pmf over the support at time t, given past treatment codes and V.
  Eigen::VectorXd pmf(int t, const std::vector<int>& abar_prev,
                      const Eigen::VectorXd& v) const;

  double prob(int t, int code, const std::vector<int>& abar_prev,
              const Eigen::VectorXd& v) const;

  LambdaProvenance provenance() const { return provenance_; }
  const TreatmentSupport& support() const { return support_; }
  int tau() const { return support_.tau(); }

  // Refits data-driven measures on a row subset (cross-fitting hygiene).
  // Fixed measures return themselves unchanged.
  ReferenceMeasure refit(const TrajectoryDataset& ds,
                         const std::vector<int>& rows) const;

  static ReferenceMeasure fixed(TreatmentSupport support,
                                std::vector<Eigen::VectorXd> pmfs);
  static ReferenceMeasure fitted_marginal(const TrajectoryDataset& ds);
  static ReferenceMeasure fitted_conditional(const TrajectoryDataset& ds);

 private:
  LambdaProvenance provenance_ = LambdaProvenance::Fixed;
  TreatmentSupport support_;
  std::vector<Eigen::VectorXd> marginal_;     // Fixed / FittedMarginal
  std::vector<FittedPtr> conditional_;        // FittedConditional, index t-1

  static ReferenceMeasure fit_on_rows(const TrajectoryDataset& ds,
                                      const std::vector<int>& rows,
                                      LambdaProvenance prov);
};

}  // namespace msmkit
