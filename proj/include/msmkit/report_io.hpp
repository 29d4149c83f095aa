#pragma once

#include <string>

#include "msmkit/estimators.hpp"
#include "msmkit/sim.hpp"

namespace msmkit {

// JSON/CSV emission. All output is deterministic: fixed key order, no
// timestamps; files embed the configuration hash and tool version.

std::string report_to_json(const EstimateReport& report,
                           const std::string& config_hash);
void write_estimate_report(const EstimateReport& report,
                           const std::string& config_hash,
                           const std::string& path);

std::string mc_report_to_csv(const McReport& report);
void write_mc_report(const McReport& report, const std::string& csv_path,
                     const std::string& json_path);

// Pinned large-sample truth: reference-measure table and oracle estimate for
// a DGP configuration hash.
struct TruthFixture {
  std::string config_hash;
  long n_oracle = 0;
  std::uint64_t seed = 0;
  std::vector<Eigen::VectorXd> lambda;  // per time
  Eigen::VectorXd beta_star;            // oracle IPW estimate
  Eigen::VectorXd beta_star_se;         // its sandwich standard errors
  Eigen::VectorXd beta_star_exact;      // enumeration cross-check
};

void write_truth_fixture(const TruthFixture& fx, const std::string& path);
TruthFixture read_truth_fixture(const std::string& path);

}  // namespace msmkit
