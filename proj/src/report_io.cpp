#include "msmkit/report_io.hpp"

#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace msmkit {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json vec_to_json(const Eigen::VectorXd& v) {
  ordered_json arr = ordered_json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

ordered_json mat_to_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (int i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::VectorXd vec_from_json(const ordered_json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v(static_cast<int>(i)) = arr[i].get<double>();
  return v;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open output file: " + path);
  out << text;
}

}  // namespace

std::string report_to_json(const EstimateReport& report,
                           const std::string& config_hash) {
  ordered_json j;
  j["tool"] = kToolVersion;
  j["config_hash"] = config_hash;
  j["estimator"] = report.estimator;
  j["n"] = report.n;
  j["d"] = report.d;
  j["beta"] = vec_to_json(report.beta);
  if (report.has_sigma) {
    j["sigma"] = mat_to_json(report.sigma);
    j["ci_level"] = report.ci_level;
    j["ci_low"] = vec_to_json(report.ci_low);
    j["ci_high"] = vec_to_json(report.ci_high);
  } else {
    j["sigma"] = nullptr;
    j["ci_level"] = report.ci_level;
    j["ci_low"] = nullptr;
    j["ci_high"] = nullptr;
  }
  if (report.outcome_moment.size() > 0) {
    j["outcome_moment"] = vec_to_json(report.outcome_moment);
  }
  ordered_json diag;
  diag["newton_iterations"] = report.newton_iterations;
  diag["final_residual"] = report.final_residual;
  diag["truncation_count"] = report.truncation_count;
  diag["min_fitted_g"] = report.min_fitted_g;
  diag["effective_sample_size"] = report.effective_sample_size;
  diag["learners"] = report.learner_info;
  diag["notes"] = report.notes;
  j["diagnostics"] = diag;
  return j.dump(2) + "\n";
}

void write_estimate_report(const EstimateReport& report,
                           const std::string& config_hash,
                           const std::string& path) {
  write_text(path, report_to_json(report, config_hash));
}

std::string mc_report_to_csv(const McReport& report) {
  std::string out =
      "scenario,config_hash,estimator,n,component,bias,sqrt_n_bias,n_mse,"
      "coverage,replicates,failures,bias_mc_se,coverage_mc_se\n";
  char buf[512];
  for (const auto& c : report.cells) {
    std::snprintf(buf, sizeof(buf),
                  "%s,%s,%s,%d,%d,%.17g,%.17g,%.17g,%.17g,%d,%d,%.17g,%.17g\n",
                  report.scenario.c_str(), report.config_hash.c_str(),
                  c.estimator.c_str(), c.n, c.component, c.bias, c.sqrt_n_bias,
                  c.n_mse, c.coverage, c.replicates, c.failures, c.bias_mc_se,
                  c.coverage_mc_se);
    out += buf;
  }
  return out;
}

void write_mc_report(const McReport& report, const std::string& csv_path,
                     const std::string& json_path) {
  if (!csv_path.empty()) write_text(csv_path, mc_report_to_csv(report));
  if (!json_path.empty()) {
    ordered_json j;
    j["tool"] = kToolVersion;
    j["scenario"] = report.scenario;
    j["config_hash"] = report.config_hash;
    ordered_json cells = ordered_json::array();
    for (const auto& c : report.cells) {
      ordered_json cell;
      cell["estimator"] = c.estimator;
      cell["n"] = c.n;
      cell["component"] = c.component;
      cell["bias"] = c.bias;
      cell["sqrt_n_bias"] = c.sqrt_n_bias;
      cell["n_mse"] = c.n_mse;
      if (c.coverage >= 0.0) {
        cell["coverage"] = c.coverage;
      } else {
        cell["coverage"] = nullptr;
      }
      cell["replicates"] = c.replicates;
      cell["failures"] = c.failures;
      cell["bias_mc_se"] = c.bias_mc_se;
      cell["coverage_mc_se"] = c.coverage_mc_se;
      cells.push_back(cell);
    }
    j["cells"] = cells;
    write_text(json_path, j.dump(2) + "\n");
  }
}

void write_truth_fixture(const TruthFixture& fx, const std::string& path) {
  ordered_json j;
  j["tool"] = kToolVersion;
  j["config_hash"] = fx.config_hash;
  j["n_oracle"] = fx.n_oracle;
  j["seed"] = fx.seed;
  ordered_json lam = ordered_json::array();
  for (const auto& pmf : fx.lambda) lam.push_back(vec_to_json(pmf));
  j["lambda"] = lam;
  j["beta_star"] = vec_to_json(fx.beta_star);
  j["beta_star_se"] = vec_to_json(fx.beta_star_se);
  j["beta_star_exact"] = vec_to_json(fx.beta_star_exact);
  write_text(path, j.dump(2) + "\n");
}

TruthFixture read_truth_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open fixture file: " + path);
  ordered_json j;
  in >> j;
  TruthFixture fx;
  fx.config_hash = j.at("config_hash").get<std::string>();
  fx.n_oracle = j.at("n_oracle").get<long>();
  fx.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& pmf : j.at("lambda")) fx.lambda.push_back(vec_from_json(pmf));
  fx.beta_star = vec_from_json(j.at("beta_star"));
  fx.beta_star_se = vec_from_json(j.at("beta_star_se"));
  fx.beta_star_exact = vec_from_json(j.at("beta_star_exact"));
  return fx;
}

}  // namespace msmkit
