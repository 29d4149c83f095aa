#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "msmkit/crossfit.hpp"
#include "msmkit/learners.hpp"
#include "msmkit/reference_measure.hpp"
#include "msmkit/working_model.hpp"

namespace msmkit {

inline constexpr double kDefaultRatioTruncation = 50.0;

// Truncated stabilized weight: min(lambda/g, c), with g read through the pmf
// floor so the ratio is always finite.
double density_ratio(double lam_prob, double g_prob, double c);

// Learner design matrices. Past treatments are one-hot encoded (first support
// level dropped), covariate blocks enter as-is, in history order. The outcome
// regression design prepends the one-hot block for the current treatment and
// appends the numeric treatment codes plus all pairwise products of the
// numeric history (codes and covariates), so additive learners can pick up
// treatment-covariate and treatment-treatment interactions.
Eigen::MatrixXd history_design(const TrajectoryDataset& ds, int t,
                               const std::vector<int>& rows);
Eigen::MatrixXd outcome_design(const TrajectoryDataset& ds, int t,
                               const std::vector<int>& rows);
// Same layout with the current treatment forced to a counterfactual level.
Eigen::MatrixXd outcome_design_at_level(const TrajectoryDataset& ds, int t,
                                        const std::vector<int>& rows,
                                        int level_code);

// Fits the treatment pmf g_t(. | h_t) on the given training rows.
FittedPtr fit_treatment_pmf(const TrajectoryDataset& ds, int t,
                            const LearnerSpec& spec,
                            const std::vector<int>& train_rows,
                            CvSelection* info = nullptr);

// Exact Lambda-integration of per-level regression values: values is K x d,
// lam_pmf the K-vector of lambda probabilities.
Eigen::VectorXd integrate_tbar(const Eigen::MatrixXd& per_level_values,
                               const Eigen::VectorXd& lam_pmf);

// Cross-fitted stabilized weights plus the lambda evaluations that produced
// them. lambda is refit per training fold when it is data-driven.
struct RatioSet {
  Eigen::MatrixXd ratios;                // n x tau, truncated at bound
  std::vector<Eigen::MatrixXd> lam_pmf;  // per time: n x K_t
  FoldAssignment folds;
  double trunc_bound = kDefaultRatioTruncation;
  long truncation_count = 0;
  double min_fitted_g = 1.0;
  std::vector<std::string> g_info;  // selected learner per time point
};

RatioSet build_ratio_set(const TrajectoryDataset& ds, const ReferenceMeasure& lam,
                         const FoldAssignment& folds,
                         const std::vector<LearnerSpec>& g_specs, double c);

// Filled ratio set from externally supplied weights (analytic truth in tests,
// known designs). lam_pmf is evaluated from `lam` on the full data.
RatioSet ratio_set_from_values(const TrajectoryDataset& ds,
                               const ReferenceMeasure& lam,
                               Eigen::MatrixXd ratios, double c);

enum class SequentialMode { Sdr, Plain };

// Backward sequential regressions. Index convention: regression[t-1] holds
// the fit at the observed (A_t, H_t); integrated[t-1] holds its Lambda
// integral at H_t; integrated[tau] holds Y * phi.
struct NuisanceSet {
  int tau = 0;
  int d = 0;
  Eigen::MatrixXd ratios;                    // n x tau (empty in plain mode)
  std::vector<Eigen::MatrixXd> regression;   // tau entries, n x d
  std::vector<Eigen::MatrixXd> integrated;   // tau+1 entries, n x d
  FoldAssignment folds;
  double trunc_bound = kDefaultRatioTruncation;
  std::vector<std::string> outcome_info;     // selected learner per time point
  // Fold-hygiene instrumentation: rows each fold's learners were trained on.
  std::vector<std::vector<std::vector<int>>> train_rows_used;  // [t-1][fold]

  int n() const { return static_cast<int>(integrated.back().rows()); }

  // The pseudo-outcome transformation for unit i at time t (1..tau+1):
  // sum_{s=t}^tau (prod_{k=t}^s r_k) (Tbar_{s+1} - T_s) + Tbar_t, with
  // Tbar_{tau+1} = y phi. Requires ratios (sdr mode) for t <= tau.
  Eigen::VectorXd pseudo_outcome(int i, int t) const;
  Eigen::MatrixXd pseudo_outcome_matrix(int t) const;  // n x d
};

// Runs the backward loop. In Sdr mode the pseudo-outcome at each step is the
// one-step-corrected transformation built from `ratios`; in Plain mode the
// integrated regression from the previous step is regressed directly and
// `ratios` may be null. Fits are cross-fitted over `ratios->folds` in Sdr
// mode and use the full sample in Plain mode.
NuisanceSet sequential_fit(const TrajectoryDataset& ds,
                           const ReferenceMeasure& lam,
                           const WorkingModel& model, const RatioSet* ratios,
                           const std::vector<LearnerSpec>& outcome_specs,
                           SequentialMode mode);

// n x d matrix of Y_i * phi(Abar_i, V_i).
Eigen::MatrixXd outcome_feature_rows(const TrajectoryDataset& ds,
                                     const WorkingModel& model);

}  // namespace msmkit
