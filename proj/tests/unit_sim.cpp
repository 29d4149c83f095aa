#include <cmath>

#include "doctest.h"
#include "msmkit/sim.hpp"

using namespace msmkit;

TEST_CASE("covariate kernel transcription points") {
  CHECK(dgp_covariate_prob(2, 1, 0) == doctest::Approx(0.2689414213699951).epsilon(1e-15));
  CHECK(dgp_covariate_prob(0, 0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(dgp_covariate_prob(4, 1, 1) == doctest::Approx(0.11920292202211755).epsilon(1e-15));
  CHECK(dgp_covariate_prob(1, 0, 1) == doctest::Approx(0.62245933120185459).epsilon(1e-15));
}

TEST_CASE("outcome kernel transcription points") {
  DgpConfig cfg = DgpConfig::reference();
  CHECK(dgp_outcome_prob(cfg, {1, 0, 2, 4}, {3, 1, 0, 1}) ==
        doctest::Approx(6.1920476443225843e-09).epsilon(1e-12));
  CHECK(dgp_outcome_prob(cfg, {0, 0, 0, 0}, {0, 0, 0, 0}) ==
        doctest::Approx(0.075858180021243546).epsilon(1e-14));
  CHECK(dgp_outcome_prob(cfg, {2, 3, 1, 2}, {4, 1, 1, 1}) ==
        doctest::Approx(0.99977518322976666).epsilon(1e-14));
  CHECK(dgp_outcome_prob(cfg, {4, 4, 4, 4}, {2, 1, 1, 0}) ==
        doctest::Approx(5.0434740820145165e-07).epsilon(1e-12));
}

TEST_CASE("treatment kernel transcription points") {
  // arbitrary constants, independent softmax evaluation
  DgpConfig cfg = DgpConfig::reference();
  Eigen::MatrixXd C(6, 5);
  // columns are levels; per-level (c1..c6) rows from the hand computation
  C << 0.1, 0.0, 0.5, -0.3, 0.2,
       0.2, -0.1, 0.0, 0.4, 0.1,
       0.3, 0.2, 0.0, -0.2, 0.1,
       0.4, 0.0, 0.1, 0.2, -0.4,
       0.5, 0.3, 0.0, -0.1, 0.2,
       0.6, -0.2, 0.0, 0.3, 0.1;
  cfg.treat_coef[2] = C;  // install at t=3 so every lag is live

  // history (a_prev, a_prev2, l_t, l_prev) = (3, 1, 2, 1)
  Eigen::VectorXd p = dgp_treatment_pmf(cfg, 3, 3, 1, 2, 1);
  CHECK(p(0) == doctest::Approx(0.60703091489821726).epsilon(1e-14));
  CHECK(p(1) == doctest::Approx(0.10815655062790999).epsilon(1e-14));
  CHECK(p(2) == doctest::Approx(0.10288169340976917).epsilon(1e-14));
  CHECK(p(3) == doctest::Approx(0.049828131814084201).epsilon(1e-14));
  CHECK(p(4) == doctest::Approx(0.13210270925001932).epsilon(1e-14));

  // null history: only c1 and c3*l_t drop out too when l_t = 0
  p = dgp_treatment_pmf(cfg, 3, 0, 0, 0, 0);
  CHECK(p(0) == doctest::Approx(0.19334307870889406).epsilon(1e-14));
  CHECK(p(2) == doctest::Approx(0.28843397993592818).epsilon(1e-14));

  p = dgp_treatment_pmf(cfg, 3, 4, 2, 1, 1);
  CHECK(p(0) == doctest::Approx(0.53441519699013795).epsilon(1e-14));
  CHECK(p(3) == doctest::Approx(0.097628851493494817).epsilon(1e-14));
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("zero constants give a uniform treatment kernel") {
  DgpConfig cfg = DgpConfig::reference();
  for (auto& C : cfg.treat_coef) C.setZero();
  const TrajectoryDataset ds = draw_dataset(cfg, 100000, 7);
  // chi-square sanity per time point
  for (int t = 1; t <= 4; ++t) {
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(5);
    for (int i = 0; i < ds.n(); ++i) counts(ds.treatment(i, t)) += 1.0;
    double chi2 = 0.0;
    const double expect = ds.n() / 5.0;
    for (int k = 0; k < 5; ++k) {
      chi2 += (counts(k) - expect) * (counts(k) - expect) / expect;
    }
    CHECK(chi2 < 30.0);  // df=4
  }
}

TEST_CASE("drawn variables live in their documented ranges; draws are seeded") {
  const DgpConfig cfg = DgpConfig::reference();
  const TrajectoryDataset ds = draw_dataset(cfg, 500, 42);
  for (int i = 0; i < ds.n(); ++i) {
    CHECK(ds.covariates(1)(i, 0) >= 0.0);
    CHECK(ds.covariates(1)(i, 0) <= 4.0);
    for (int t = 2; t <= 4; ++t) {
      const double l = ds.covariates(t)(i, 0);
      CHECK((l == 0.0 || l == 1.0));
    }
    for (int t = 1; t <= 4; ++t) {
      CHECK(ds.treatment(i, t) >= 0);
      CHECK(ds.treatment(i, t) <= 4);
    }
    CHECK((ds.outcome(i) == 0.0 || ds.outcome(i) == 1.0));
  }
  const TrajectoryDataset ds2 = draw_dataset(cfg, 500, 42);
  for (int i = 0; i < ds.n(); ++i) {
    CHECK(ds.outcome(i) == ds2.outcome(i));
    for (int t = 1; t <= 4; ++t) CHECK(ds.treatment(i, t) == ds2.treatment(i, t));
  }
  const TrajectoryDataset ds3 = draw_dataset(cfg, 500, 43);
  bool any_diff = false;
  for (int i = 0; i < ds.n() && !any_diff; ++i) any_diff = ds.outcome(i) != ds3.outcome(i);
  CHECK(any_diff);
}

TEST_CASE("reference constants keep every marginal treatment level above 0.05") {
  const DgpConfig cfg = DgpConfig::reference();
  const auto marg = exact_treatment_marginals(cfg);
  REQUIRE(marg.size() == 4);
  for (int t = 0; t < 4; ++t) {
    CHECK(marg[t].sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(marg[t].minCoeff() >= 0.05);
  }
  // empirical check at n = 1e5
  const TrajectoryDataset ds = draw_dataset(cfg, 100000, 12345);
  for (int t = 1; t <= 4; ++t) {
    Eigen::VectorXd freq = Eigen::VectorXd::Zero(5);
    for (int i = 0; i < ds.n(); ++i) freq(ds.treatment(i, t)) += 1.0;
    freq /= ds.n();
    CHECK(freq.minCoeff() >= 0.05);
    for (int k = 0; k < 5; ++k) {
      CHECK(freq(k) == doctest::Approx(marg[t - 1](k)).epsilon(0.08));
    }
  }
}

TEST_CASE("exact marginals match direct averaging at t=1") {
  const DgpConfig cfg = DgpConfig::reference();
  const auto marg = exact_treatment_marginals(cfg);
  Eigen::VectorXd direct = Eigen::VectorXd::Zero(5);
  for (int l = 0; l < 5; ++l) {
    direct += 0.2 * dgp_treatment_pmf(cfg, 1, 0, 0, l, 0);
  }
  for (int k = 0; k < 5; ++k) {
    CHECK(marg[0](k) == doctest::Approx(direct(k)).epsilon(1e-12));
  }
}

TEST_CASE("analytic regressions: tau=1 closed form and U1 enumeration") {
  const DgpConfig cfg = DgpConfig::toy(1);
  const ReferenceMeasure lam = exact_marginal_measure(cfg);
  const WorkingModel model{LinkKind::Identity, FeatureMap::parse("intercept", 1, {})};

  // T_1(a, l) = E[Y * 1 | A=a, L=l] = logistic(alpha(a, l))
  for (int a = 0; a <= 1; ++a) {
    for (int l = 0; l <= 1; ++l) {
      const double expect = dgp_outcome_prob(cfg, {static_cast<double>(a)},
                                             {static_cast<double>(l)});
      const Eigen::VectorXd got =
          analytic_regression(cfg, model, lam, 1, {a}, {static_cast<double>(l)});
      CHECK(got(0) == doctest::Approx(expect).epsilon(1e-14));
    }
  }

  // integrate-then-average equals direct enumeration of U_1
  const Eigen::VectorXd u1 = exact_outcome_moment(cfg, model, lam);
  Eigen::VectorXd v(1);
  double direct = 0.0;
  for (int l = 0; l <= 1; ++l) {
    v(0) = l;
    for (int a = 0; a <= 1; ++a) {
      direct += cfg.l1_probs(l) * lam.pmf(1, {}, v)(a) *
                dgp_outcome_prob(cfg, {static_cast<double>(a)},
                                 {static_cast<double>(l)});
    }
  }
  CHECK(u1(0) == doctest::Approx(direct).epsilon(1e-14));

  // pmfs sum to one
  CHECK(dgp_treatment_pmf(cfg, 1, 0, 0, 1, 0).sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("analytic nuisance set satisfies the sequential identities on the toy") {
  const DgpConfig cfg = DgpConfig::toy(2);
  const ReferenceMeasure lam = exact_marginal_measure(cfg);
  const WorkingModel model{LinkKind::Logistic, FeatureMap::intercept_sum(2)};
  const TrajectoryDataset ds = draw_dataset(cfg, 50, 5);
  const NuisanceSet nuis = analytic_nuisance_set(cfg, ds, model, lam);

  // Tbar_t is the lambda integral of T_t at every observed history
  for (int i = 0; i < ds.n(); ++i) {
    Eigen::VectorXd v(1);
    v(0) = ds.covariates(1)(i, 0);
    const Eigen::VectorXd pmf = lam.pmf(1, {}, v);
    Eigen::VectorXd byhand = Eigen::VectorXd::Zero(2);
    for (int a = 0; a <= 1; ++a) {
      byhand += pmf(a) * analytic_regression(cfg, model, lam, 1, {a},
                                             {ds.covariates(1)(i, 0)});
    }
    CHECK((nuis.integrated[0].row(i).transpose() - byhand).lpNorm<Eigen::Infinity>() < 1e-12);
  }

  // exact beta solves the estimating equation against the enumerated moment
  const Eigen::VectorXd beta = exact_beta(cfg, model, lam);
  CHECK(beta.allFinite());
  CHECK(beta.size() == 2);
}

TEST_CASE("metric aggregation: constant estimator, always-covering interval, identity") {
  Eigen::VectorXd beta_star(1);
  beta_star << -0.2;
  std::vector<ReplicateResult> reps(40);
  Rng rng(17);
  for (int s = 0; s < 40; ++s) {
    reps[s].ok = true;
    reps[s].beta = Eigen::VectorXd::Constant(1, beta_star(0) + 0.1);
    reps[s].ci_low = Eigen::VectorXd::Constant(1, -10.0);
    reps[s].ci_high = Eigen::VectorXd::Constant(1, 10.0);
  }
  auto cells = aggregate_metrics("const", 250, reps, beta_star);
  REQUIRE(cells.size() == 1);
  CHECK(cells[0].bias == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(cells[0].sqrt_n_bias == doctest::Approx(0.1 * std::sqrt(250.0)).epsilon(1e-12));
  CHECK(cells[0].coverage == doctest::Approx(1.0));
  CHECK(cells[0].failures == 0);

  // metrics identity on noisy replicates: n*mse = (sqrt(n)*bias)^2 + n*var
  for (int s = 0; s < 40; ++s) {
    reps[s].beta(0) = beta_star(0) + 0.05 + 0.3 * rng.normal();
  }
  cells = aggregate_metrics("noisy", 500, reps, beta_star);
  double mean = 0.0;
  for (const auto& r : reps) mean += r.beta(0);
  mean /= 40;
  double var = 0.0;
  for (const auto& r : reps) var += (r.beta(0) - mean) * (r.beta(0) - mean);
  var /= 40;
  CHECK(cells[0].n_mse ==
        doctest::Approx(cells[0].sqrt_n_bias * cells[0].sqrt_n_bias + 500.0 * var)
            .epsilon(1e-10));

  // failures are excluded and counted
  reps[3].ok = false;
  cells = aggregate_metrics("fail", 500, reps, beta_star);
  CHECK(cells[0].failures == 1);
  CHECK(cells[0].replicates == 39);
}

TEST_CASE("scenario grid rows") {
  const ScenarioSpec s4 = ScenarioSpec::numbered(4, 4);
  CHECK(s4.outcome == std::vector<NuisanceTag>{NuisanceTag::Stack, NuisanceTag::Stack,
                                               NuisanceTag::Mean, NuisanceTag::Mean});
  CHECK(s4.pmf == std::vector<NuisanceTag>{NuisanceTag::Mean, NuisanceTag::Mean,
                                           NuisanceTag::Stack, NuisanceTag::Stack});
  const ScenarioSpec s1 = ScenarioSpec::numbered(1, 4);
  for (auto t : s1.outcome) CHECK(t == NuisanceTag::Stack);
  CHECK_THROWS_AS(ScenarioSpec::numbered(9, 4), ContractError);
}

TEST_CASE("dgp config hash distinguishes constants") {
  const DgpConfig a = DgpConfig::reference();
  DgpConfig b = DgpConfig::reference();
  b.treat_coef[0](2, 0) += 1e-9;
  CHECK(a.config_hash() != b.config_hash());
  CHECK(a.config_hash() == DgpConfig::reference().config_hash());
}
