#include "msmkit/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

namespace msmkit {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void append_double(std::string* s, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g;", v);
  *s += buf;
}

}  // namespace

std::string DgpConfig::serialize() const {
  std::string s = "dgp:v1;";
  s += "tau=" + std::to_string(tau) + ";K=" + std::to_string(n_treat_levels) +
       ";L1=" + std::to_string(n_l1_categories) + ";";
  for (int i = 0; i < l1_probs.size(); ++i) append_double(&s, l1_probs(i));
  for (const auto& C : treat_coef) {
    for (int j = 0; j < C.rows(); ++j) {
      for (int i = 0; i < C.cols(); ++i) append_double(&s, C(j, i));
    }
  }
  s += tau4_outcome ? "out=tau4;" : "out=generic;";
  if (!tau4_outcome) {
    append_double(&s, out_intercept);
    for (int t = 0; t < out_l.size(); ++t) append_double(&s, out_l(t));
    for (int t = 0; t < out_a.size(); ++t) append_double(&s, out_a(t));
    for (int t = 0; t < out_al.size(); ++t) append_double(&s, out_al(t));
  }
  return s;
}

DgpConfig DgpConfig::reference() {
  DgpConfig cfg;
  cfg.tau = 4;
  cfg.n_treat_levels = 5;
  cfg.n_l1_categories = 5;
  cfg.l1_probs = Eigen::VectorXd::Constant(5, 0.2);
  // Level tilts: term coefficient times s_i, s = (-1,-.5,0,.5,1), so covariate
  // signals move probability mass monotonically across the five levels. The
  // interaction term c5 is zero so the kernel stays inside the span of
  // main-effect multinomial learners; lagged terms at t<=2 are zeroed where
  // the lag is the null set. Chosen to keep every marginal level probability
  // above 0.05 (checked in tests) with visible confounding at every t.
  const Eigen::VectorXd s = (Eigen::VectorXd(5) << -1.0, -0.5, 0.0, 0.5, 1.0).finished();
  auto tilt = [&](double c2, double c3, double c4, double c6) {
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(6, 5);
    C.row(1) = c2 * s.transpose();
    C.row(2) = c3 * s.transpose();
    C.row(3) = c4 * s.transpose();
    C.row(5) = c6 * s.transpose();
    return C;
  };
  cfg.treat_coef.push_back(tilt(0.0, 0.30, 0.0, 0.0));
  cfg.treat_coef.push_back(tilt(0.5, 0.5, 0.0, 0.12));
  cfg.treat_coef.push_back(tilt(0.4, 0.4, 0.2, 0.4));
  cfg.treat_coef.push_back(tilt(0.4, 0.4, 0.2, 0.4));
  cfg.tau4_outcome = true;
  return cfg;
}

DgpConfig DgpConfig::toy(int tau, int K, int n_l1) {
  if (tau < 1 || tau > 3) throw ContractError("toy config: tau in {1,2,3}");
  DgpConfig cfg;
  cfg.tau = tau;
  cfg.n_treat_levels = K;
  cfg.n_l1_categories = n_l1;
  cfg.l1_probs = Eigen::VectorXd::Constant(n_l1, 1.0 / n_l1);
  Eigen::VectorXd s(K);
  for (int i = 0; i < K; ++i) s(i) = K == 1 ? 0.0 : -1.0 + 2.0 * i / (K - 1);
  auto tilt = [&](double c1, double c2, double c3, double c6) {
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(6, K);
    C.row(0) = c1 * s.transpose();
    C.row(1) = c2 * s.transpose();
    C.row(2) = c3 * s.transpose();
    C.row(5) = c6 * s.transpose();
    return C;
  };
  cfg.treat_coef.push_back(tilt(-0.15, 0.0, 0.6, 0.0));
  if (tau >= 2) cfg.treat_coef.push_back(tilt(-0.1, 0.8, 0.7, 0.4));
  if (tau >= 3) cfg.treat_coef.push_back(tilt(-0.1, 0.8, 0.7, 0.4));
  cfg.tau4_outcome = false;
  cfg.out_intercept = -1.0;
  cfg.out_l = Eigen::VectorXd::Zero(tau);
  cfg.out_a = Eigen::VectorXd::Zero(tau);
  cfg.out_al = Eigen::VectorXd::Zero(tau);
  for (int t = 0; t < tau; ++t) {
    cfg.out_l(t) = 1.0 + 0.5 * t;
    cfg.out_a(t) = -0.8 - 0.3 * t;
    cfg.out_al(t) = (t % 2 == 0) ? 0.5 : -0.4;
  }
  return cfg;
}

Eigen::VectorXd dgp_treatment_pmf(const DgpConfig& cfg, int t, double a_prev,
                                  double a_prev2, double l_t, double l_prev) {
  const Eigen::MatrixXd& C = cfg.treat_coef.at(t - 1);
  const int K = cfg.n_treat_levels;
  Eigen::VectorXd logw(K);
  for (int i = 0; i < K; ++i) {
    logw(i) = C(0, i) + C(1, i) * a_prev / 4.0 + C(2, i) * l_t +
              C(3, i) * a_prev2 / 4.0 + C(4, i) * (a_prev / 4.0) * l_t +
              C(5, i) * l_prev;
  }
  const double mx = logw.maxCoeff();
  Eigen::VectorXd w = (logw.array() - mx).exp();
  return w / w.sum();
}

double dgp_covariate_prob(double a_prev, double l_prev, double l_prev2) {
  return logistic(-0.5 * a_prev + l_prev2 + 2.0 * l_prev - a_prev * l_prev +
                  l_prev2 * l_prev);
}

double dgp_outcome_prob(const DgpConfig& cfg, const std::vector<double>& a,
                        const std::vector<double>& l) {
  if (static_cast<int>(a.size()) != cfg.tau || static_cast<int>(l.size()) != cfg.tau) {
    throw ContractError("dgp_outcome_prob: path length != tau");
  }
  if (cfg.tau4_outcome) {
    if (cfg.tau != 4) throw ContractError("tau4 outcome needs tau == 4");
    const double l1 = l[0], l2 = l[1], l3 = l[2], l4 = l[3];
    const double a1 = a[0], a2 = a[1], a3 = a[2], a4 = a[3];
    const double alpha = -2.5 + 5.0 * (l4 + l3 + l2 + l1 / 5.0) +
                         5.0 * l4 * l3 * l2 * l1 / 5.0 -
                         a4 * (5.0 - 2.0 * a3 * l4 * l3) -
                         a3 * (4.0 - 1.5 * a2 * l3 * l2) -
                         a2 * (3.0 - a1 * l2 * l1 / 5.0) - a1 * (2.0 - l1 / 5.0);
    return logistic(alpha);
  }
  double alpha = cfg.out_intercept;
  for (int t = 0; t < cfg.tau; ++t) {
    alpha += cfg.out_l(t) * l[t] + cfg.out_a(t) * a[t] + cfg.out_al(t) * a[t] * l[t];
  }
  return logistic(alpha);
}

TrajectoryDataset draw_dataset(const DgpConfig& cfg, int n, std::uint64_t seed) {
  if (n < 1) throw ContractError("draw_dataset: n >= 1 required");
  Rng rng(derive_seed(seed, 0x647261ULL));  // "dra" stream
  const int tau = cfg.tau;
  std::vector<Eigen::MatrixXd> cov(tau, Eigen::MatrixXd(n, 1));
  Eigen::MatrixXi treat(n, tau);
  Eigen::VectorXd y(n);
  std::vector<double> l1w(cfg.l1_probs.data(), cfg.l1_probs.data() + cfg.l1_probs.size());
  std::vector<double> a_vals(tau), l_vals(tau), pw(cfg.n_treat_levels);
  for (int i = 0; i < n; ++i) {
    for (int t = 1; t <= tau; ++t) {
      if (t == 1) {
        l_vals[0] = static_cast<double>(rng.categorical(l1w));
      } else {
        const double l_prev2 = t >= 3 ? l_vals[t - 3] : 0.0;
        l_vals[t - 1] =
            rng.bernoulli(dgp_covariate_prob(a_vals[t - 2], l_vals[t - 2], l_prev2))
                ? 1.0
                : 0.0;
      }
      const double a_prev = t >= 2 ? a_vals[t - 2] : 0.0;
      const double a_prev2 = t >= 3 ? a_vals[t - 3] : 0.0;
      const double l_prev = t >= 2 ? l_vals[t - 2] : 0.0;
      const Eigen::VectorXd pmf =
          dgp_treatment_pmf(cfg, t, a_prev, a_prev2, l_vals[t - 1], l_prev);
      for (int k = 0; k < cfg.n_treat_levels; ++k) pw[k] = pmf(k);
      a_vals[t - 1] = static_cast<double>(rng.categorical(pw));
      cov[t - 1](i, 0) = l_vals[t - 1];
      treat(i, t - 1) = static_cast<int>(a_vals[t - 1]);
    }
    y(i) = rng.bernoulli(dgp_outcome_prob(cfg, a_vals, l_vals)) ? 1.0 : 0.0;
  }
  std::vector<int> levels(cfg.n_treat_levels);
  for (int k = 0; k < cfg.n_treat_levels; ++k) levels[k] = k;
  return make_dataset(tau, std::move(cov), std::move(treat), std::move(y),
                      std::vector<std::vector<int>>(tau, levels));
}

Eigen::MatrixXd dgp_treatment_pmf_rows(const DgpConfig& cfg,
                                       const TrajectoryDataset& ds, int t) {
  Eigen::MatrixXd out(ds.n(), cfg.n_treat_levels);
  for (int i = 0; i < ds.n(); ++i) {
    const double a_prev = t >= 2 ? ds.treatment(i, t - 1) : 0.0;
    const double a_prev2 = t >= 3 ? ds.treatment(i, t - 2) : 0.0;
    const double l_t = ds.covariates(t)(i, 0);
    const double l_prev = t >= 2 ? ds.covariates(t - 1)(i, 0) : 0.0;
    out.row(i) = dgp_treatment_pmf(cfg, t, a_prev, a_prev2, l_t, l_prev).transpose();
  }
  return out;
}

Eigen::MatrixXd analytic_ratio_matrix(const DgpConfig& cfg,
                                      const TrajectoryDataset& ds,
                                      const ReferenceMeasure& lam) {
  Eigen::MatrixXd r(ds.n(), ds.tau());
  std::vector<int> abar_prev;
  for (int t = 1; t <= ds.tau(); ++t) {
    const Eigen::MatrixXd G = dgp_treatment_pmf_rows(cfg, ds, t);
    for (int i = 0; i < ds.n(); ++i) {
      abar_prev.clear();
      for (int s = 1; s <= t - 1; ++s) abar_prev.push_back(ds.treatment(i, s));
      const int a = ds.treatment(i, t);
      const double lp = lam.prob(t, a, abar_prev, ds.baseline(i));
      r(i, t - 1) = lp / G(i, a);
    }
  }
  return r;
}

namespace {

// Forward sweep over the finite trajectory space; calls visit(prob, a, l)
// for every complete path.
template <typename Visitor>
void enumerate_paths(const DgpConfig& cfg, Visitor&& visit) {
  std::vector<double> a(cfg.tau), l(cfg.tau);
  std::function<void(int, double)> step = [&](int t, double prob) {
    if (prob <= 0.0) return;
    if (t > cfg.tau) {
      visit(prob, a, l);
      return;
    }
    const int n_l = t == 1 ? cfg.n_l1_categories : 2;
    for (int lv = 0; lv < n_l; ++lv) {
      double pl;
      if (t == 1) {
        pl = cfg.l1_probs(lv);
      } else {
        const double l_prev2 = t >= 3 ? l[t - 3] : 0.0;
        const double p1 = dgp_covariate_prob(a[t - 2], l[t - 2], l_prev2);
        pl = lv == 1 ? p1 : 1.0 - p1;
      }
      l[t - 1] = lv;
      const double a_prev = t >= 2 ? a[t - 2] : 0.0;
      const double a_prev2 = t >= 3 ? a[t - 3] : 0.0;
      const double l_prev = t >= 2 ? l[t - 2] : 0.0;
      const Eigen::VectorXd pmf =
          dgp_treatment_pmf(cfg, t, a_prev, a_prev2, l[t - 1], l_prev);
      for (int k = 0; k < cfg.n_treat_levels; ++k) {
        a[t - 1] = k;
        step(t + 1, prob * pl * pmf(k));
      }
    }
  };
  step(1, 1.0);
}

long state_space_size(const DgpConfig& cfg) {
  long size = cfg.n_l1_categories;
  for (int t = 1; t <= cfg.tau; ++t) {
    size *= cfg.n_treat_levels;
    if (t >= 2) size *= 2;
    if (size > kAnalyticStateCap) return -1;
  }
  return size;
}

TreatmentSupport dgp_support(const DgpConfig& cfg) {
  std::vector<int> levels(cfg.n_treat_levels);
  for (int k = 0; k < cfg.n_treat_levels; ++k) levels[k] = k;
  TreatmentSupport support;
  support.levels.assign(cfg.tau, levels);
  return support;
}

}  // namespace

std::vector<Eigen::VectorXd> exact_treatment_marginals(const DgpConfig& cfg) {
  if (state_space_size(cfg) < 0) {
    throw ContractError("exact_treatment_marginals: state space over cap");
  }
  std::vector<Eigen::VectorXd> marg(cfg.tau,
                                    Eigen::VectorXd::Zero(cfg.n_treat_levels));
  enumerate_paths(cfg, [&](double prob, const std::vector<double>& a,
                           const std::vector<double>&) {
    for (int t = 0; t < cfg.tau; ++t) marg[t](static_cast<int>(a[t])) += prob;
  });
  for (auto& m : marg) m /= m.sum();
  return marg;
}

ReferenceMeasure exact_marginal_measure(const DgpConfig& cfg) {
  return ReferenceMeasure::fixed(dgp_support(cfg), exact_treatment_marginals(cfg));
}

Eigen::VectorXd analytic_regression(const DgpConfig& cfg,
                                    const WorkingModel& model,
                                    const ReferenceMeasure& lam, int t,
                                    const std::vector<int>& abar,
                                    const std::vector<double>& lbar) {
  if (static_cast<int>(abar.size()) != t || static_cast<int>(lbar.size()) != t) {
    throw ContractError("analytic_regression: history length mismatch");
  }
  Eigen::VectorXd v(1);
  v(0) = lbar[0];
  if (t == cfg.tau) {
    std::vector<double> a_vals(cfg.tau);
    for (int s = 0; s < cfg.tau; ++s) a_vals[s] = abar[s];
    const double py = dgp_outcome_prob(cfg, a_vals, lbar);
    return py * model.phi(abar, v);
  }
  // E over L_{t+1}, then the Lambda integral at t+1.
  const double l_prev2 = t >= 2 ? lbar[t - 2] : 0.0;
  const double p1 = dgp_covariate_prob(abar[t - 1], lbar[t - 1], l_prev2);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(model.dim());
  for (int lv = 0; lv <= 1; ++lv) {
    std::vector<double> lnext = lbar;
    lnext.push_back(lv);
    const double pl = lv == 1 ? p1 : 1.0 - p1;
    if (pl <= 0.0) continue;
    out += pl * analytic_integrated(cfg, model, lam, t + 1, abar, lnext);
  }
  return out;
}

Eigen::VectorXd analytic_integrated(const DgpConfig& cfg,
                                    const WorkingModel& model,
                                    const ReferenceMeasure& lam, int t,
                                    const std::vector<int>& abar,
                                    const std::vector<double>& lbar) {
  if (static_cast<int>(abar.size()) != t - 1 || static_cast<int>(lbar.size()) != t) {
    throw ContractError("analytic_integrated: history length mismatch");
  }
  Eigen::VectorXd v(1);
  v(0) = lbar[0];
  const Eigen::VectorXd pmf = lam.pmf(t, abar, v);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(model.dim());
  for (int k = 0; k < cfg.n_treat_levels; ++k) {
    if (pmf(k) <= 0.0) continue;
    std::vector<int> anext = abar;
    anext.push_back(k);
    out += pmf(k) * analytic_regression(cfg, model, lam, t, anext, lbar);
  }
  return out;
}

NuisanceSet analytic_nuisance_set(const DgpConfig& cfg,
                                  const TrajectoryDataset& ds,
                                  const WorkingModel& model,
                                  const ReferenceMeasure& lam) {
  const int n = ds.n();
  const int tau = cfg.tau;
  const int d = model.dim();
  NuisanceSet nuis;
  nuis.tau = tau;
  nuis.d = d;
  nuis.folds = single_fold(n);
  nuis.ratios = analytic_ratio_matrix(cfg, ds, lam);
  nuis.regression.assign(tau, Eigen::MatrixXd::Zero(n, d));
  nuis.integrated.assign(tau + 1, Eigen::MatrixXd::Zero(n, d));
  nuis.integrated[tau] = outcome_feature_rows(ds, model);
  nuis.outcome_info.assign(tau, "analytic");
  nuis.train_rows_used.assign(tau, {});

  // Shared-cell memoization; the analytic recursions only depend on the
  // realized history values.
  std::map<std::vector<double>, Eigen::VectorXd> memo_reg, memo_bar;
  for (int i = 0; i < n; ++i) {
    std::vector<int> abar;
    std::vector<double> lbar;
    for (int t = 1; t <= tau; ++t) {
      lbar.push_back(ds.covariates(t)(i, 0));
      std::vector<double> key;
      key.push_back(t);
      for (int a : abar) key.push_back(a);
      key.push_back(-1e18);
      for (double l : lbar) key.push_back(l);
      auto bar_it = memo_bar.find(key);
      if (bar_it == memo_bar.end()) {
        bar_it = memo_bar
                     .emplace(key, analytic_integrated(cfg, model, lam, t, abar, lbar))
                     .first;
      }
      nuis.integrated[t - 1].row(i) = bar_it->second.transpose();
      abar.push_back(ds.treatment(i, t));
      key.push_back(1e18);
      key.push_back(abar.back());
      auto reg_it = memo_reg.find(key);
      if (reg_it == memo_reg.end()) {
        reg_it = memo_reg
                     .emplace(key, analytic_regression(cfg, model, lam, t, abar, lbar))
                     .first;
      }
      nuis.regression[t - 1].row(i) = reg_it->second.transpose();
    }
  }
  return nuis;
}

Eigen::VectorXd exact_outcome_moment(const DgpConfig& cfg,
                                     const WorkingModel& model,
                                     const ReferenceMeasure& lam) {
  if (state_space_size(cfg) < 0) {
    throw ContractError("exact_outcome_moment: state space over cap");
  }
  Eigen::VectorXd u1 = Eigen::VectorXd::Zero(model.dim());
  for (int lv = 0; lv < cfg.n_l1_categories; ++lv) {
    if (cfg.l1_probs(lv) <= 0.0) continue;
    u1 += cfg.l1_probs(lv) * analytic_integrated(cfg, model, lam, 1, {},
                                                 {static_cast<double>(lv)});
  }
  return u1;
}

Eigen::VectorXd exact_beta(const DgpConfig& cfg, const WorkingModel& model,
                           const ReferenceMeasure& lam) {
  std::vector<std::pair<Eigen::VectorXd, double>> atoms;
  for (int lv = 0; lv < cfg.n_l1_categories; ++lv) {
    Eigen::VectorXd v(1);
    v(0) = lv;
    atoms.emplace_back(v, cfg.l1_probs(lv));
  }
  const SequenceLattice lattice =
      build_lattice_for_atoms(dgp_support(cfg), lam, atoms, LatticeMode::Exact);
  const Eigen::VectorXd u1 = exact_outcome_moment(cfg, model, lam);
  return solve_working_model(model, lattice, u1,
                             Eigen::VectorXd::Zero(model.dim()))
      .beta;
}

TruthOracle true_beta_oracle(const DgpConfig& cfg, const WorkingModel& model,
                             const ReferenceMeasure& lam, long n_oracle,
                             std::uint64_t seed) {
  const TrajectoryDataset ds = draw_dataset(cfg, static_cast<int>(n_oracle), seed);
  const Eigen::MatrixXd ratios = analytic_ratio_matrix(cfg, ds, lam);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(ds.n());
  for (int t = 0; t < ds.tau(); ++t) w = w.cwiseProduct(ratios.col(t));

  Eigen::MatrixXd Phi(ds.n(), model.dim());
  for (int i = 0; i < ds.n(); ++i) Phi.row(i) = model.phi_observed(ds, i).transpose();
  const NewtonResult sol =
      solve_weighted_glm(model.link, Phi, ds.outcomes(), w,
                         Eigen::VectorXd::Zero(model.dim()));

  // Sandwich variance of the weighted estimating equation.
  const int n = ds.n();
  const int d = model.dim();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    const double eta = Phi.row(i).dot(sol.beta);
    const Eigen::VectorXd phi = Phi.row(i).transpose();
    J += w(i) * link_slope(model.link, eta) * phi * phi.transpose();
    const Eigen::VectorXd psi =
        w(i) * (ds.outcome(i) - link_value(model.link, eta)) * phi;
    M += psi * psi.transpose();
  }
  J /= n;
  M /= n;
  const Eigen::MatrixXd Jinv = J.inverse();
  const Eigen::MatrixXd V = Jinv * M * Jinv.transpose() / n;
  TruthOracle oracle;
  oracle.beta = sol.beta;
  oracle.se.resize(d);
  for (int k = 0; k < d; ++k) oracle.se(k) = std::sqrt(std::max(V(k, k), 0.0));
  oracle.n = n_oracle;
  oracle.seed = seed;
  return oracle;
}

ScenarioSpec ScenarioSpec::numbered(int id, int tau) {
  std::vector<int> all, first_half, second_half;
  for (int t = 1; t <= tau; ++t) {
    all.push_back(t);
    (t <= tau / 2 ? first_half : second_half).push_back(t);
  }
  auto from_vec = [&](const std::vector<int>& ts) {
    std::vector<NuisanceTag> tags(tau, NuisanceTag::Mean);
    for (int t : ts) tags[t - 1] = NuisanceTag::Stack;
    return tags;
  };
  ScenarioSpec spec;
  spec.name = "scenario" + std::to_string(id);
  switch (id) {
    case 1:
      spec.outcome = from_vec(all);
      spec.pmf = from_vec(all);
      break;
    case 2:
      spec.outcome = from_vec(all);
      spec.pmf = from_vec({});
      break;
    case 3:
      spec.outcome = from_vec({});
      spec.pmf = from_vec(all);
      break;
    case 4:
      spec.outcome = from_vec(first_half);
      spec.pmf = from_vec(second_half);
      break;
    case 5:
      spec.outcome = from_vec(second_half);
      spec.pmf = from_vec(first_half);
      break;
    default:
      throw ContractError("scenario id must be 1..5");
  }
  return spec;
}

LearnerSpec scenario_outcome_spec(NuisanceTag tag, const HarnessConfig& hc) {
  if (tag == NuisanceTag::Mean) return LearnerSpec::mean();
  // Inner selection over squared loss is stable at 3 folds; the pmf stack
  // keeps hc.stack_folds (log-loss selection needs the larger folds).
  return LearnerSpec::stack_of(
      {LearnerSpec::mean(), LearnerSpec::linear_ridge(),
       LearnerSpec::boosted_stumps(hc.boost_rounds, hc.boost_rate)},
      3);
}

LearnerSpec scenario_pmf_spec(NuisanceTag tag, const HarnessConfig& hc) {
  if (tag == NuisanceTag::Mean) return LearnerSpec::mean();
  return LearnerSpec::stack_of(
      {LearnerSpec::mean(), LearnerSpec::softmax(), LearnerSpec::knn()},
      hc.stack_folds);
}

std::vector<McCell> aggregate_metrics(const std::string& estimator, int n,
                                      const std::vector<ReplicateResult>& reps,
                                      const Eigen::VectorXd& beta_star) {
  const int d = static_cast<int>(beta_star.size());
  std::vector<McCell> cells;
  int ok = 0, failures = 0;
  for (const auto& r : reps) (r.ok ? ok : failures)++;
  for (int c = 0; c < d; ++c) {
    McCell cell;
    cell.estimator = estimator;
    cell.n = n;
    cell.component = c;
    cell.replicates = ok;
    cell.failures = failures;
    if (ok == 0) {
      cells.push_back(cell);
      continue;
    }
    double sum = 0.0, sum_sq = 0.0;
    int cover_count = 0, with_ci = 0;
    for (const auto& r : reps) {
      if (!r.ok) continue;
      const double err = r.beta(c) - beta_star(c);
      sum += err;
      sum_sq += err * err;
      if (r.ci_low.size() == d) {
        ++with_ci;
        if (r.ci_low(c) <= beta_star(c) && beta_star(c) <= r.ci_high(c)) ++cover_count;
      }
    }
    double max_colmean = 0.0;
    bool psd = true;
    for (const auto& r : reps) {
      if (!r.ok) continue;
      max_colmean = std::max(max_colmean, r.eif_colmean_max);
      psd = psd && r.sigma_psd;
    }
    cell.max_eif_colmean = max_colmean;
    cell.all_sigma_psd = psd;
    cell.bias = sum / ok;
    cell.sqrt_n_bias = cell.bias * std::sqrt(static_cast<double>(n));
    cell.n_mse = n * sum_sq / ok;
    const double var = sum_sq / ok - cell.bias * cell.bias;
    cell.bias_mc_se = std::sqrt(std::max(var, 0.0) / ok);
    if (with_ci == ok) {
      cell.coverage = static_cast<double>(cover_count) / ok;
      cell.coverage_mc_se =
          std::sqrt(std::max(cell.coverage * (1.0 - cell.coverage), 0.0) / ok);
    }
    cells.push_back(cell);
  }
  return cells;
}

McReport run_scenario(const DgpConfig& cfg, const ScenarioSpec& scenario,
                      const HarnessConfig& hc, const ReferenceMeasure& lam,
                      const Eigen::VectorXd& beta_star) {
  if (static_cast<int>(scenario.outcome.size()) != cfg.tau ||
      static_cast<int>(scenario.pmf.size()) != cfg.tau) {
    throw ContractError("run_scenario: scenario spec length != tau");
  }
  WorkingModel model{LinkKind::Logistic, FeatureMap::intercept_sum(cfg.tau)};

  std::vector<LearnerSpec> outcome_specs, pmf_specs;
  for (int t = 0; t < cfg.tau; ++t) {
    outcome_specs.push_back(scenario_outcome_spec(scenario.outcome[t], hc));
    pmf_specs.push_back(scenario_pmf_spec(scenario.pmf[t], hc));
  }
  const bool want_sdr = std::count(hc.estimators.begin(), hc.estimators.end(), "sdr");
  const bool want_tmle = std::count(hc.estimators.begin(), hc.estimators.end(), "tmle");
  const bool want_ipw = std::count(hc.estimators.begin(), hc.estimators.end(), "ipw");
  const bool want_gcomp =
      std::count(hc.estimators.begin(), hc.estimators.end(), "gcomp");

  McReport report;
  report.scenario = scenario.name;
  report.config_hash = cfg.config_hash();

  for (int n : hc.n_grid) {
    std::map<std::string, std::vector<ReplicateResult>> results;
    for (const auto& est : hc.estimators) results[est].resize(hc.replicates);

    std::atomic<int> next{0};
    auto worker = [&]() {
      for (;;) {
        const int s = next.fetch_add(1);
        if (s >= hc.replicates) break;
        const std::uint64_t rep_seed =
            derive_seed(hc.seed, static_cast<std::uint64_t>(n),
                        static_cast<std::uint64_t>(s));
        EstimatorOptions opts;
        opts.truncation = hc.truncation;
        opts.seed = derive_seed(rep_seed, 0x657374ULL);
        auto record = [&](const std::string& est, const EstimateReport& rep) {
          ReplicateResult& slot = results[est][s];
          slot.ok = true;
          slot.beta = rep.beta;
          slot.eif_colmean_max = rep.eif_colmean_max;
          if (rep.has_sigma) {
            slot.ci_low = rep.ci_low;
            slot.ci_high = rep.ci_high;
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(rep.sigma);
            slot.sigma_psd = eig.eigenvalues().minCoeff() >= -1e-12;
          }
        };
        auto record_failure = [&](const std::string& est, const std::string& why) {
          ReplicateResult& slot = results[est][s];
          slot.ok = false;
          slot.error = why;
        };
        try {
          const TrajectoryDataset ds = draw_dataset(cfg, n, rep_seed);
          const FoldAssignment folds =
              make_folds(n, hc.folds, derive_seed(rep_seed, 0xf01d5ULL));
          if (want_sdr || want_tmle) {
            RatioSet ratios;
            bool have_ratios = false;
            try {
              ratios = build_ratio_set(ds, lam, folds, pmf_specs, hc.truncation);
              have_ratios = true;
            } catch (const Error& e) {
              if (want_sdr) record_failure("sdr", e.what());
              if (want_tmle) record_failure("tmle", e.what());
            }
            if (have_ratios) {
              if (want_sdr) {
                try {
                  record("sdr", fit_sdr_with_ratios(ds, lam, model, ratios,
                                                    outcome_specs, opts));
                } catch (const Error& e) {
                  record_failure("sdr", e.what());
                }
              }
              if (want_tmle) {
                try {
                  record("tmle", fit_tmle_with_ratios(ds, lam, model, ratios,
                                                      outcome_specs, opts));
                } catch (const Error& e) {
                  record_failure("tmle", e.what());
                }
              }
            }
          }
          if (want_ipw) {
            try {
              record("ipw", fit_ipw(ds, lam, model, pmf_specs, opts));
            } catch (const Error& e) {
              record_failure("ipw", e.what());
            }
          }
          if (want_gcomp) {
            try {
              record("gcomp", fit_gcomp(ds, lam, model, outcome_specs, opts));
            } catch (const Error& e) {
              record_failure("gcomp", e.what());
            }
          }
        } catch (const Error& e) {
          for (const auto& est : hc.estimators) record_failure(est, e.what());
        }
      }
    };

    int n_threads = hc.threads > 0
                        ? hc.threads
                        : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min(n_threads, hc.replicates));
    if (n_threads == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }

    for (const auto& est : hc.estimators) {
      const auto cells = aggregate_metrics(est, n, results[est], beta_star);
      report.cells.insert(report.cells.end(), cells.begin(), cells.end());
    }
  }
  return report;
}

}  // namespace msmkit
