#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "msmkit/estimators.hpp"

namespace msmkit {

// ---------------------------------------------------------------------------
// Data-generating process. Treatments follow a per-time multinomial whose
// level-i log weight is
//   c1[i] + c2[i]*A_{t-1}/4 + c3[i]*L_t + c4[i]*A_{t-2}/4
//         + c5[i]*(A_{t-1}/4)*L_t + c6[i]*L_{t-1},
// with variables of index <= 0 entering as zero. The first covariate is a
// categorical draw; later covariates are Bernoulli with
//   logit p = -0.5*A_{t-1} + L_{t-2} + 2*L_{t-1} - A_{t-1}*L_{t-1}
//             + L_{t-2}*L_{t-1}.
// The four-period configuration uses the fixed response surface of
// outcome_prob_tau4's source; reduced configurations use a generic logistic
// response with per-time coefficients.
// ---------------------------------------------------------------------------

struct DgpConfig {
  int tau = 4;
  int n_treat_levels = 5;
  int n_l1_categories = 5;
  Eigen::VectorXd l1_probs;                 // size n_l1_categories
  std::vector<Eigen::MatrixXd> treat_coef;  // per time: 6 x K (rows = c1..c6)

  bool tau4_outcome = true;  // use the fixed four-period response surface
  double out_intercept = 0.0;
  Eigen::VectorXd out_l, out_a, out_al;  // generic outcome coefficients

  std::string serialize() const;
  std::string config_hash() const { return hex64(fnv1a64(serialize())); }

  // The repository's reference constants for the four-period study.
  static DgpConfig reference();
  // A small analytic configuration (default: two periods, binary treatment
  // and covariates) for oracle-backed tests.
  static DgpConfig toy(int tau = 2, int K = 2, int n_l1 = 2);
};

// Treatment pmf at time t given the (lag-resolved) history values.
Eigen::VectorXd dgp_treatment_pmf(const DgpConfig& cfg, int t, double a_prev,
                                  double a_prev2, double l_t, double l_prev);
// Bernoulli probability for L_t, t >= 2.
double dgp_covariate_prob(double a_prev, double l_prev, double l_prev2);
// Outcome success probability given complete paths (values, time order).
double dgp_outcome_prob(const DgpConfig& cfg, const std::vector<double>& a,
                        const std::vector<double>& l);

TrajectoryDataset draw_dataset(const DgpConfig& cfg, int n, std::uint64_t seed);

// True g_t evaluated at the observed rows: n x K matrix for time t.
Eigen::MatrixXd dgp_treatment_pmf_rows(const DgpConfig& cfg,
                                       const TrajectoryDataset& ds, int t);
// Analytic stabilized-weight matrix lambda_t(A_t)/g_t(A_t|H_t), untruncated.
Eigen::MatrixXd analytic_ratio_matrix(const DgpConfig& cfg,
                                      const TrajectoryDataset& ds,
                                      const ReferenceMeasure& lam);

// Exact per-time treatment marginals by forward enumeration of the finite
// state space (feasible for the shipped configurations).
std::vector<Eigen::VectorXd> exact_treatment_marginals(const DgpConfig& cfg);
ReferenceMeasure exact_marginal_measure(const DgpConfig& cfg);

// ---------------------------------------------------------------------------
// Analytic nuisances on reduced configurations: exact sequential regressions
// and their Lambda integrals by enumeration of all future paths.
// ---------------------------------------------------------------------------

inline constexpr long kAnalyticStateCap = 2000000;

// T_t(a_t, h_t): abar holds a_1..a_t, lbar holds l_1..l_t.
Eigen::VectorXd analytic_regression(const DgpConfig& cfg,
                                    const WorkingModel& model,
                                    const ReferenceMeasure& lam, int t,
                                    const std::vector<int>& abar,
                                    const std::vector<double>& lbar);
// Tbar_t(h_t): abar holds a_1..a_{t-1}.
Eigen::VectorXd analytic_integrated(const DgpConfig& cfg,
                                    const WorkingModel& model,
                                    const ReferenceMeasure& lam, int t,
                                    const std::vector<int>& abar,
                                    const std::vector<double>& lbar);

// Fills a NuisanceSet with analytic ratios and regressions evaluated at the
// observed rows (truth injection for estimator studies).
NuisanceSet analytic_nuisance_set(const DgpConfig& cfg,
                                  const TrajectoryDataset& ds,
                                  const WorkingModel& model,
                                  const ReferenceMeasure& lam);

// Exact projection parameter by full enumeration of the counterfactual law:
// solves E_Lambda[m(beta.phi) phi] = integral theta phi dLambda.
Eigen::VectorXd exact_outcome_moment(const DgpConfig& cfg,
                                     const WorkingModel& model,
                                     const ReferenceMeasure& lam);
Eigen::VectorXd exact_beta(const DgpConfig& cfg, const WorkingModel& model,
                           const ReferenceMeasure& lam);

// Large-sample truth oracle: one IPW fit with analytic weights, plus its
// sandwich standard errors.
struct TruthOracle {
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  long n = 0;
  std::uint64_t seed = 0;
};

TruthOracle true_beta_oracle(const DgpConfig& cfg, const WorkingModel& model,
                             const ReferenceMeasure& lam, long n_oracle,
                             std::uint64_t seed);

// ---------------------------------------------------------------------------
// Scenario grid and Monte Carlo metrics.
// ---------------------------------------------------------------------------

enum class NuisanceTag { Stack, Mean };

struct ScenarioSpec {
  std::string name;
  std::vector<NuisanceTag> outcome;  // per time
  std::vector<NuisanceTag> pmf;      // per time

  static ScenarioSpec numbered(int id, int tau);  // rows 1..5 of the study grid
};

struct HarnessConfig {
  std::vector<std::string> estimators = {"sdr", "tmle", "ipw"};
  std::vector<int> n_grid = {250, 500, 1000, 2000};
  int replicates = 200;
  int folds = 5;
  int stack_folds = 5;
  double truncation = kDefaultRatioTruncation;
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = hardware concurrency
  int boost_rounds = 500;
  double boost_rate = 0.08;
};

struct McCell {
  std::string estimator;
  int n = 0;
  int component = 0;
  double bias = 0.0;
  double sqrt_n_bias = 0.0;
  double n_mse = 0.0;
  double coverage = -1.0;  // -1 when the estimator reports no intervals
  int replicates = 0;
  int failures = 0;
  double bias_mc_se = 0.0;
  double coverage_mc_se = 0.0;
  double max_eif_colmean = 0.0;  // worst influence centering across replicates
  bool all_sigma_psd = true;
};

struct ReplicateResult {
  bool ok = false;
  Eigen::VectorXd beta;
  Eigen::VectorXd ci_low, ci_high;  // empty when absent
  double eif_colmean_max = 0.0;
  bool sigma_psd = true;
  std::string error;
};

struct McReport {
  std::string scenario;
  std::string config_hash;
  std::vector<McCell> cells;
};

// Metric aggregation over replicate results for one (estimator, n) pair;
// failures are counted and excluded.
std::vector<McCell> aggregate_metrics(const std::string& estimator, int n,
                                      const std::vector<ReplicateResult>& reps,
                                      const Eigen::VectorXd& beta_star);

// Learner specs for a scenario tag under the harness defaults.
LearnerSpec scenario_outcome_spec(NuisanceTag tag, const HarnessConfig& hc);
LearnerSpec scenario_pmf_spec(NuisanceTag tag, const HarnessConfig& hc);

McReport run_scenario(const DgpConfig& cfg, const ScenarioSpec& scenario,
                      const HarnessConfig& hc, const ReferenceMeasure& lam,
                      const Eigen::VectorXd& beta_star);

}  // namespace msmkit
