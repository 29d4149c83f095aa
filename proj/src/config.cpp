#include "msmkit/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace msmkit {

namespace {

std::string strip(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_top_level(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char ch : s) {
    if (ch == '(') ++depth;
    if (ch == ')') --depth;
    if (ch == sep && depth == 0) {
      out.push_back(strip(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!strip(cur).empty() || !out.empty()) out.push_back(strip(cur));
  return out;
}

double to_double(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SchemaError("config: cannot parse number '" + s + "' for key " + key);
  }
}

long to_long(const std::string& s, const std::string& key) {
  const double v = to_double(s, key);
  return static_cast<long>(v);
}

std::vector<std::string> name_list(const std::string& s) {
  std::vector<std::string> out;
  for (const auto& piece : split_top_level(s, ',')) {
    if (!piece.empty()) out.push_back(piece);
  }
  return out;
}

}  // namespace

LearnerSpec parse_learner_spec(const std::string& text, int stack_folds) {
  const std::string s = strip(text);
  const std::size_t open = s.find('(');
  if (open == std::string::npos) {
    LearnerSpec spec;
    spec.kind = parse_learner_kind(s);
    spec.stack_folds = stack_folds;
    if (spec.kind == LearnerKind::Stack) {
      throw SchemaError("config: stack learner needs member list");
    }
    return spec;
  }
  if (s.back() != ')') throw SchemaError("config: unbalanced learner expression '" + s + "'");
  const std::string head = strip(s.substr(0, open));
  const std::string body = s.substr(open + 1, s.size() - open - 2);
  LearnerSpec spec;
  spec.kind = parse_learner_kind(head);
  spec.stack_folds = stack_folds;
  if (spec.kind == LearnerKind::Stack) {
    for (const auto& member : split_top_level(body, ',')) {
      if (member.empty()) continue;
      spec.stack.push_back(parse_learner_spec(member, stack_folds));
    }
    if (spec.stack.empty()) throw SchemaError("config: empty learner stack");
    return spec;
  }
  for (const auto& kv : split_top_level(body, ',')) {
    if (kv.empty()) continue;
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw SchemaError("config: expected key=value in learner args, got '" + kv + "'");
    }
    const std::string key = strip(kv.substr(0, eq));
    spec.hyper[key] = to_double(strip(kv.substr(eq + 1)), "learner." + key);
  }
  return spec;
}

std::vector<LearnerSpec> RunConfig::outcome_specs(int tau) const {
  std::vector<LearnerSpec> specs(tau, outcome_default);
  for (const auto& [t, spec] : outcome_overrides) {
    if (t < 1 || t > tau) throw SchemaError("config: learners.outcome." + std::to_string(t) + " out of range");
    specs[t - 1] = spec;
  }
  return specs;
}

std::vector<LearnerSpec> RunConfig::pmf_specs(int tau) const {
  std::vector<LearnerSpec> specs(tau, pmf_default);
  for (const auto& [t, spec] : pmf_overrides) {
    if (t < 1 || t > tau) throw SchemaError("config: learners.pmf." + std::to_string(t) + " out of range");
    specs[t - 1] = spec;
  }
  return specs;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config_text(buf.str());
}

RunConfig parse_run_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::string canonical;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = strip(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw SchemaError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    if (key.empty()) throw SchemaError("config line " + std::to_string(line_no) + ": empty key");
    if (kv.count(key)) throw SchemaError("config: duplicate key '" + key + "'");
    kv[key] = value;
  }
  for (const auto& [k, v] : kv) canonical += k + "=" + v + "\n";

  RunConfig rc;
  rc.config_hash = hex64(fnv1a64(canonical));
  rc.outcome_default = parse_learner_spec("stack(mean, linear_ridge, boosted_stumps)", rc.stack_folds);
  rc.pmf_default = parse_learner_spec("stack(mean, multinomial_softmax, knn)", rc.stack_folds);

  auto take = [&](const std::string& key) -> std::string* {
    auto it = kv.find(key);
    if (it == kv.end()) return nullptr;
    return &it->second;
  };
  auto consume = [&](const std::string& key) {
    auto it = kv.find(key);
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  if (take("stack_folds")) rc.stack_folds = static_cast<int>(to_long(consume("stack_folds"), "stack_folds"));

  if (take("data.path")) rc.data_path = consume("data.path");
  if (take("data.tau")) rc.schema.tau = static_cast<int>(to_long(consume("data.tau"), "data.tau"));
  if (take("data.treatments")) rc.schema.treatment_cols = name_list(consume("data.treatments"));
  if (take("data.outcome")) rc.schema.outcome_col = consume("data.outcome");
  if (take("data.baseline")) rc.schema.baseline_cols = name_list(consume("data.baseline"));
  if (rc.schema.tau > 0) {
    rc.schema.covariate_cols.resize(rc.schema.tau);
    for (int t = 1; t <= rc.schema.tau; ++t) {
      const std::string key = "data.covariates." + std::to_string(t);
      if (take(key)) rc.schema.covariate_cols[t - 1] = name_list(consume(key));
    }
  }
  if (take("data.support")) {
    std::vector<int> levels;
    for (const auto& tok : name_list(consume("data.support"))) {
      levels.push_back(static_cast<int>(to_long(tok, "data.support")));
    }
    std::sort(levels.begin(), levels.end());
    rc.schema.support_levels.assign(std::max(rc.schema.tau, 1), levels);
  }

  if (take("model.link")) rc.link = consume("model.link");
  if (take("model.features")) rc.features = consume("model.features");

  if (take("lambda.kind")) rc.lambda_kind = consume("lambda.kind");
  for (int t = 1; t <= std::max(rc.schema.tau, 1); ++t) {
    const std::string key = "lambda.fixed." + std::to_string(t);
    if (take(key)) {
      std::vector<std::string> toks = name_list(consume(key));
      Eigen::VectorXd pmf(toks.size());
      for (std::size_t k = 0; k < toks.size(); ++k) pmf(static_cast<int>(k)) = to_double(toks[k], key);
      rc.lambda_fixed.resize(std::max<std::size_t>(rc.lambda_fixed.size(), t));
      rc.lambda_fixed[t - 1] = pmf;
    }
  }

  if (take("estimators")) rc.estimators = name_list(consume("estimators"));
  if (take("folds")) rc.folds = static_cast<int>(to_long(consume("folds"), "folds"));
  if (take("seed")) rc.seed = static_cast<std::uint64_t>(to_long(consume("seed"), "seed"));
  if (take("truncation")) rc.truncation = to_double(consume("truncation"), "truncation");
  if (take("ci_level")) rc.ci_level = to_double(consume("ci_level"), "ci_level");
  if (take("bootstrap")) rc.bootstrap = static_cast<int>(to_long(consume("bootstrap"), "bootstrap"));
  if (take("lattice.mode")) rc.lattice_mode = consume("lattice.mode");
  if (take("lattice.mc_draws")) rc.mc_draws = to_long(consume("lattice.mc_draws"), "lattice.mc_draws");
  if (take("lattice.cap")) rc.lattice_cap = to_long(consume("lattice.cap"), "lattice.cap");

  if (take("learners.outcome.default")) {
    rc.outcome_default = parse_learner_spec(consume("learners.outcome.default"), rc.stack_folds);
  }
  if (take("learners.pmf.default")) {
    rc.pmf_default = parse_learner_spec(consume("learners.pmf.default"), rc.stack_folds);
  }
  for (int t = 1; t <= std::max(rc.schema.tau, 1); ++t) {
    const std::string okey = "learners.outcome." + std::to_string(t);
    if (take(okey)) rc.outcome_overrides.emplace_back(t, parse_learner_spec(consume(okey), rc.stack_folds));
    const std::string pkey = "learners.pmf." + std::to_string(t);
    if (take(pkey)) rc.pmf_overrides.emplace_back(t, parse_learner_spec(consume(pkey), rc.stack_folds));
  }

  if (take("sim.scenarios")) {
    rc.scenarios.clear();
    for (const auto& tok : name_list(consume("sim.scenarios"))) {
      rc.scenarios.push_back(static_cast<int>(to_long(tok, "sim.scenarios")));
    }
  }
  if (take("sim.n_grid")) {
    rc.n_grid.clear();
    for (const auto& tok : name_list(consume("sim.n_grid"))) {
      rc.n_grid.push_back(static_cast<int>(to_long(tok, "sim.n_grid")));
    }
  }
  if (take("sim.replicates")) rc.replicates = static_cast<int>(to_long(consume("sim.replicates"), "sim.replicates"));
  if (take("sim.threads")) rc.threads = static_cast<int>(to_long(consume("sim.threads"), "sim.threads"));
  if (take("sim.estimators")) rc.estimators = name_list(consume("sim.estimators"));
  if (take("truth.n")) rc.truth_n = to_long(consume("truth.n"), "truth.n");
  if (take("out.dir")) rc.out_dir = consume("out.dir");

  if (!kv.empty()) {
    throw SchemaError("config: unknown key '" + kv.begin()->first + "'");
  }
  for (const auto& est : rc.estimators) {
    if (est != "sdr" && est != "tmle" && est != "ipw" && est != "gcomp") {
      throw SchemaError("config: unknown estimator '" + est + "'");
    }
  }
  return rc;
}

}  // namespace msmkit
