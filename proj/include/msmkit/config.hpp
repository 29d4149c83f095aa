#pragma once

#include <string>
#include <vector>

#include "msmkit/dataset.hpp"
#include "msmkit/learners.hpp"

namespace msmkit {

// Parsed run configuration. The file format is a flat list of
// `dotted.key = value` lines, '#' comments, unknown keys rejected. Values are
// scalars, comma lists, or learner expressions like
// `stack(mean, linear_ridge(lambda=0.5), knn(k=25))`.
struct RunConfig {
  std::string config_hash;  // FNV-1a of the canonicalized file content

  std::string data_path;
  DataSchema schema;

  std::string link = "logistic";
  std::string features = "intercept, sum_treatment";

  std::string lambda_kind = "fitted_marginal";
  std::vector<Eigen::VectorXd> lambda_fixed;  // per time, for kind=fixed

  std::vector<std::string> estimators = {"sdr", "tmle", "ipw"};
  int folds = 5;
  int stack_folds = 5;
  std::uint64_t seed = 1;
  double truncation = 50.0;
  double ci_level = 0.95;
  int bootstrap = 0;
  std::string lattice_mode = "exact";
  long mc_draws = 10000;
  long lattice_cap = 1000000;

  LearnerSpec outcome_default;
  LearnerSpec pmf_default;
  std::vector<std::pair<int, LearnerSpec>> outcome_overrides;  // (time, spec)
  std::vector<std::pair<int, LearnerSpec>> pmf_overrides;

  std::vector<int> scenarios = {1, 2, 3, 4, 5};
  std::vector<int> n_grid = {250, 500, 1000, 2000};
  int replicates = 200;
  int threads = 0;
  long truth_n = 1000000;

  std::string out_dir = "out";

  std::vector<LearnerSpec> outcome_specs(int tau) const;
  std::vector<LearnerSpec> pmf_specs(int tau) const;
};

RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text);

// Learner expression grammar: `kind`, `kind(key=value,...)`, or
// `stack(spec, spec, ...)`.
LearnerSpec parse_learner_spec(const std::string& text, int stack_folds);

}  // namespace msmkit
