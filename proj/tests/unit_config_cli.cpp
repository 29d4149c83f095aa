#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "msmkit/config.hpp"
#include "msmkit/report_io.hpp"

using namespace msmkit;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MSMKIT_BIN) + " " + args + " >/dev/null 2>&1";
  return std::system(cmd.c_str());
}

}  // namespace

TEST_CASE("config parsing: values, defaults, unknown keys") {
  const std::string text = R"(
# comment
data.path = file.csv
data.tau = 2
data.treatments = A1, A2
data.covariates.1 = L1
data.covariates.2 = L2
data.outcome = Y
model.link = logistic
model.features = intercept, sum_treatment
estimators = sdr, ipw
folds = 4
seed = 99
truncation = 25
learners.outcome.default = stack(mean, linear_ridge(lambda=0.5))
learners.pmf.2 = mean
)";
  const RunConfig rc = parse_run_config_text(text);
  CHECK(rc.data_path == "file.csv");
  CHECK(rc.schema.tau == 2);
  CHECK(rc.schema.treatment_cols == std::vector<std::string>{"A1", "A2"});
  CHECK(rc.folds == 4);
  CHECK(rc.seed == 99);
  CHECK(rc.truncation == 25.0);
  CHECK(rc.estimators == std::vector<std::string>{"sdr", "ipw"});
  const auto outs = rc.outcome_specs(2);
  CHECK(outs[0].kind == LearnerKind::Stack);
  CHECK(outs[0].stack[1].hp("lambda", -1) == 0.5);
  const auto pmfs = rc.pmf_specs(2);
  CHECK(pmfs[0].kind == LearnerKind::Stack);
  CHECK(pmfs[1].kind == LearnerKind::Mean);

  CHECK_THROWS_AS(parse_run_config_text("bogus.key = 1\n"), SchemaError);
  CHECK_THROWS_AS(parse_run_config_text("data.tau = 2\ndata.tau = 3\n"), SchemaError);
  CHECK_THROWS_AS(parse_run_config_text("estimators = magic\n"), SchemaError);
  CHECK_THROWS_AS(parse_run_config_text("folds\n"), SchemaError);
}

TEST_CASE("config hash is stable under comment and order changes") {
  const RunConfig a = parse_run_config_text("seed = 1\nfolds = 5\n");
  const RunConfig b = parse_run_config_text("folds = 5\n# note\nseed = 1\n");
  const RunConfig c = parse_run_config_text("folds = 5\nseed = 2\n");
  CHECK(a.config_hash == b.config_hash);
  CHECK(a.config_hash != c.config_hash);
}

TEST_CASE("learner grammar parses nested stacks and hyperparameters") {
  const LearnerSpec s =
      parse_learner_spec("stack(mean, knn(k=25), boosted_stumps(rounds=50, learning_rate=0.2))", 4);
  REQUIRE(s.kind == LearnerKind::Stack);
  REQUIRE(s.stack.size() == 3);
  CHECK(s.stack[1].hp("k", -1) == 25.0);
  CHECK(s.stack[2].hp("rounds", -1) == 50.0);
  CHECK(s.stack_folds == 4);
  CHECK_THROWS_AS(parse_learner_spec("stack", 3), SchemaError);
  CHECK_THROWS_AS(parse_learner_spec("wizard(k=2)", 3), ContractError);
  CHECK_THROWS_AS(parse_learner_spec("knn(k=2", 3), SchemaError);
}

TEST_CASE("estimate report json embeds tool version and config hash") {
  EstimateReport rep;
  rep.estimator = "sdr";
  rep.n = 10;
  rep.d = 1;
  rep.beta = Eigen::VectorXd::Constant(1, -0.25);
  const std::string json = report_to_json(rep, "abc123");
  CHECK(json.find("abc123") != std::string::npos);
  CHECK(json.find(kToolVersion) != std::string::npos);
  CHECK(json.find("-0.25") != std::string::npos);
}

TEST_CASE("truth fixture round-trips") {
  TruthFixture fx;
  fx.config_hash = "deadbeef";
  fx.n_oracle = 1000;
  fx.seed = 5;
  fx.lambda = {Eigen::VectorXd::Constant(2, 0.5), Eigen::VectorXd::Constant(2, 0.5)};
  fx.beta_star = Eigen::VectorXd::Constant(2, -0.21);
  fx.beta_star_se = Eigen::VectorXd::Constant(2, 0.01);
  fx.beta_star_exact = Eigen::VectorXd::Constant(2, -0.2105);
  const std::string path = (fs::temp_directory_path() / "msmkit_fx.json").string();
  write_truth_fixture(fx, path);
  const TruthFixture back = read_truth_fixture(path);
  CHECK(back.config_hash == fx.config_hash);
  CHECK(back.n_oracle == fx.n_oracle);
  CHECK(back.lambda[1](0) == 0.5);
  CHECK(back.beta_star(0) == fx.beta_star(0));
  CHECK(back.beta_star_exact(1) == fx.beta_star_exact(1));
}

TEST_CASE("cli fit writes one report per estimator and a summary") {
  const fs::path dir = fs::temp_directory_path() / "msmkit_cli_fit";
  fs::create_directories(dir);
  // tiny tau=2 dataset
  {
    std::ofstream csv(dir / "toy.csv");
    csv << "L1,A1,L2,A2,Y\n";
    Rng rng(3);
    for (int i = 0; i < 120; ++i) {
      const int l1 = static_cast<int>(rng.below(2));
      const int a1 = rng.bernoulli(0.3 + 0.3 * l1) ? 1 : 0;
      const int l2 = rng.bernoulli(0.5) ? 1 : 0;
      const int a2 = rng.bernoulli(0.3 + 0.3 * l2) ? 1 : 0;
      const int y = rng.bernoulli(0.2 + 0.15 * (l1 + l2) + 0.1 * (a1 + a2)) ? 1 : 0;
      csv << l1 << "," << a1 << "," << l2 << "," << a2 << "," << y << "\n";
    }
  }
  {
    std::ofstream cfg(dir / "fit.cfg");
    cfg << "data.path = " << (dir / "toy.csv").string() << "\n"
        << "data.tau = 2\n"
        << "data.treatments = A1, A2\n"
        << "data.covariates.1 = L1\n"
        << "data.covariates.2 = L2\n"
        << "data.outcome = Y\n"
        << "estimators = sdr, ipw, gcomp\n"
        << "folds = 3\n"
        << "seed = 4\n"
        << "learners.outcome.default = linear_ridge\n"
        << "learners.pmf.default = multinomial_softmax\n";
  }
  const int code = run_cli("fit --config " + (dir / "fit.cfg").string() +
                           " --out " + (dir / "out").string());
  CHECK(code == 0);
  CHECK(fs::exists(dir / "out" / "fit_sdr.json"));
  CHECK(fs::exists(dir / "out" / "fit_ipw.json"));
  CHECK(fs::exists(dir / "out" / "fit_gcomp.json"));
  const std::string sdr_json = slurp((dir / "out" / "fit_sdr.json").string());
  CHECK(sdr_json.find("\"estimator\": \"sdr\"") != std::string::npos);
}

TEST_CASE("cli rejects malformed configs with exit code 1 naming the key") {
  const fs::path dir = fs::temp_directory_path() / "msmkit_cli_bad";
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "bad.cfg");
    cfg << "data.path = nowhere.csv\nmystery.knob = 3\n";
  }
  const std::string cmd = std::string(MSMKIT_BIN) + " fit --config " +
                          (dir / "bad.cfg").string() + " --out " +
                          (dir / "out").string() + " >/dev/null 2>&1";
  const int code = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(code) == 1);
  const std::string err = slurp((dir / "out" / "error.json").string());
  CHECK(err.find("mystery.knob") != std::string::npos);
}

TEST_CASE("cli simulate is byte-deterministic given config and seed") {
  const fs::path dir = fs::temp_directory_path() / "msmkit_cli_sim";
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "sim.cfg");
    cfg << "sim.scenarios = 2\n"     // mean pmfs keep this cheap
        << "sim.n_grid = 40\n"
        << "sim.replicates = 3\n"
        << "sim.estimators = gcomp\n"
        << "sim.threads = 2\n"
        << "seed = 1\n"
        << "folds = 2\n"
        << "learners.outcome.default = linear_ridge\n"
        << "learners.pmf.default = mean\n";
  }
  REQUIRE(run_cli("simulate --config " + (dir / "sim.cfg").string() + " --out " +
                  (dir / "o1").string()) == 0);
  REQUIRE(run_cli("simulate --config " + (dir / "sim.cfg").string() + " --out " +
                  (dir / "o2").string()) == 0);
  CHECK(slurp((dir / "o1" / "scenario2.csv").string()) ==
        slurp((dir / "o2" / "scenario2.csv").string()));
  CHECK(slurp((dir / "o1" / "scenario2.json").string()) ==
        slurp((dir / "o2" / "scenario2.json").string()));
}
