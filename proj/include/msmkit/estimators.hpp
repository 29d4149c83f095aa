#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "msmkit/inference.hpp"
#include "msmkit/lattice.hpp"
#include "msmkit/nuisance.hpp"
#include "msmkit/solver.hpp"

namespace msmkit {

struct EstimatorOptions {
  double tol = kDefaultSolverTol;
  int max_iter = kDefaultSolverMaxIter;
  double truncation = kDefaultRatioTruncation;
  LatticeMode lattice_mode = LatticeMode::Exact;
  long mc_draws = 10000;
  long lattice_cap = kDefaultLatticeCap;
  std::uint64_t seed = 0;
  double ci_level = 0.95;
  int bootstrap = 0;  // IPW only; 0 disables bootstrap intervals
};

struct EstimateReport {
  std::string estimator;
  int n = 0;
  int d = 0;
  Eigen::VectorXd beta;
  bool has_sigma = false;
  Eigen::MatrixXd sigma;
  Eigen::VectorXd ci_low, ci_high;
  double ci_level = 0.95;
  Eigen::VectorXd outcome_moment;  // the estimated U_1 fed to the solver
  Eigen::MatrixXd influence;       // EIF rows (estimators with Wald output)
  int newton_iterations = 0;
  double final_residual = 0.0;
  long truncation_count = 0;
  double eif_colmean_max = 0.0;  // max |column mean| of the influence rows
  double min_fitted_g = 1.0;
  double effective_sample_size = 0.0;
  std::vector<std::string> notes;
  std::vector<std::string> learner_info;
};

// Inverse probability weighting: solves the weighted estimating equation
// (1/n) sum_i w_i (Y_i - m(beta.phi_i)) phi_i = 0 with w_i the product of
// per-time stabilized weights. Pass `injected_weights` to bypass estimation
// of g (analytic truth, known designs). No covariance unless bootstrap > 0.
EstimateReport fit_ipw(const TrajectoryDataset& ds, const ReferenceMeasure& lam,
                       const WorkingModel& model,
                       const std::vector<LearnerSpec>& g_specs,
                       const EstimatorOptions& opts = {},
                       const Eigen::VectorXd* injected_weights = nullptr);

// G-computation: backward sequential regressions on the full sample, exact
// Lambda integration, Newton solve of the working-model equation.
EstimateReport fit_gcomp(const TrajectoryDataset& ds,
                         const ReferenceMeasure& lam, const WorkingModel& model,
                         const std::vector<LearnerSpec>& outcome_specs,
                         const EstimatorOptions& opts = {});

// Cross-fitted sequentially doubly robust estimator with EIF-based Wald
// intervals.
EstimateReport fit_sdr(const TrajectoryDataset& ds, const ReferenceMeasure& lam,
                       const WorkingModel& model,
                       const std::vector<LearnerSpec>& g_specs,
                       const std::vector<LearnerSpec>& outcome_specs,
                       const FoldAssignment& folds,
                       const EstimatorOptions& opts = {});

// TMLE-like estimator: backward cross-fitted regressions with a per-time
// intercept fluctuation on the integrated regression, weighted by the
// cumulated future stabilized weights.
EstimateReport fit_tmle(const TrajectoryDataset& ds, const ReferenceMeasure& lam,
                        const WorkingModel& model,
                        const std::vector<LearnerSpec>& g_specs,
                        const std::vector<LearnerSpec>& outcome_specs,
                        const FoldAssignment& folds,
                        const EstimatorOptions& opts = {});

// Variants reusing precomputed cross-fitted weights (the simulation harness
// shares one ratio set between sdr and tmle).
EstimateReport fit_sdr_with_ratios(const TrajectoryDataset& ds,
                                   const ReferenceMeasure& lam,
                                   const WorkingModel& model,
                                   const RatioSet& ratios,
                                   const std::vector<LearnerSpec>& outcome_specs,
                                   const EstimatorOptions& opts = {});
EstimateReport fit_tmle_with_ratios(const TrajectoryDataset& ds,
                                    const ReferenceMeasure& lam,
                                    const WorkingModel& model,
                                    const RatioSet& ratios,
                                    const std::vector<LearnerSpec>& outcome_specs,
                                    const EstimatorOptions& opts = {});

// Solves the working-model equation from an already-built nuisance set and
// attaches EIF-based Wald inference; the tail of the sdr estimator, exposed
// for nuisance-injection studies.
EstimateReport sdr_solve_from_nuisances(const TrajectoryDataset& ds,
                                        const ReferenceMeasure& lam,
                                        const WorkingModel& model,
                                        const NuisanceSet& nuis,
                                        const Eigen::VectorXd& beta_init,
                                        const EstimatorOptions& opts = {});

// The IPW point estimate used to initialize the Newton iterations of the
// doubly robust estimators.
Eigen::VectorXd ipw_beta_from_weights(const TrajectoryDataset& ds,
                                      const WorkingModel& model,
                                      const Eigen::VectorXd& weights,
                                      const EstimatorOptions& opts);

// Solution of the intercept-only weighted least squares with offset used by
// the TMLE fluctuation: the weighted mean residual.
double tmle_fluctuation(const Eigen::VectorXd& residuals,
                        const Eigen::VectorXd& weights);

}  // namespace msmkit
