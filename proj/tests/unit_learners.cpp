#include <cmath>

#include "doctest.h"
#include "msmkit/crossfit.hpp"
#include "msmkit/learners.hpp"

using namespace msmkit;

TEST_CASE("mean learner returns the (weighted) sample mean") {
  Eigen::MatrixXd X(4, 2);
  X << 1, 2, 3, 4, 5, 6, 7, 8;
  Eigen::VectorXd y(4);
  y << 0, 1, 1, 0;
  const auto fit = fit_regression(LearnerSpec::mean(), X, y);
  CHECK(fit->predict(X)(2) == doctest::Approx(0.5).epsilon(1e-15));

  Eigen::VectorXd w(4);
  w << 1, 3, 0, 0;
  const auto wfit = fit_regression(LearnerSpec::mean(), X, y, w);
  CHECK(wfit->predict(X)(0) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("linear ridge with zero penalty interpolates exactly linear data") {
  Eigen::MatrixXd X(5, 1);
  X << -2, -1, 0, 1, 3;
  const Eigen::VectorXd y = 2.0 * X.col(0);
  const auto fit = fit_regression(LearnerSpec::linear_ridge(0.0), X, y);
  Eigen::MatrixXd probe(2, 1);
  probe << 10, -7;
  const Eigen::VectorXd pred = fit->predict(probe);
  CHECK(pred(0) == doctest::Approx(20.0).epsilon(1e-10));
  CHECK(pred(1) == doctest::Approx(-14.0).epsilon(1e-10));

  // interpolating case: square full-rank X reproduces y
  Eigen::MatrixXd Xs(2, 1);
  Xs << 0.0, 1.0;
  Eigen::VectorXd ys(2);
  ys << 0.4, -1.3;
  const auto fit2 = fit_regression(LearnerSpec::linear_ridge(0.0), Xs, ys);
  const Eigen::VectorXd back = fit2->predict(Xs);
  CHECK((back - ys).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("linear ridge handles a degenerate system with a floor") {
  Eigen::MatrixXd X(3, 2);
  X << 1, 1, 2, 2, 3, 3;  // duplicated column
  Eigen::VectorXd y(3);
  y << 1, 2, 3;
  const auto fit = fit_regression(LearnerSpec::linear_ridge(0.0), X, y);
  CHECK(fit->predict(X).allFinite());
}

TEST_CASE("logistic ridge matches an independent convex-descent oracle") {
  // separable two-point problem; the penalty keeps coefficients finite
  Eigen::MatrixXd X(2, 1);
  X << -1, 1;
  Eigen::VectorXd y(2);
  y << 0, 1;
  const double lambda = 1.0;
  const auto fit = fit_regression(LearnerSpec::logistic_ridge(lambda), X, y);
  const Eigen::VectorXd pred = fit->predict(X);
  CHECK(pred.allFinite());
  CHECK(pred(0) < 0.5);
  CHECK(pred(1) > 0.5);

  // oracle: long plain gradient descent on the penalized log-loss
  double b0 = 0.0, b1 = 0.0;
  for (int iter = 0; iter < 400000; ++iter) {
    double g0 = 0.0, g1 = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double eta = b0 + b1 * X(i, 0);
      const double mu = 1.0 / (1.0 + std::exp(-eta));
      g0 += mu - y(i);
      g1 += (mu - y(i)) * X(i, 0);
    }
    g1 += lambda * b1;
    b0 -= 0.01 * g0;
    b1 -= 0.01 * g1;
  }
  Eigen::MatrixXd probe(1, 1);
  probe << 0.37;
  const double oracle_pred = 1.0 / (1.0 + std::exp(-(b0 + b1 * 0.37)));
  CHECK(fit->predict(probe)(0) == doctest::Approx(oracle_pred).epsilon(1e-4));
}

TEST_CASE("logistic predictions are clipped away from 0 and 1") {
  Eigen::MatrixXd X(6, 1);
  X << -3, -2, -1, 1, 2, 3;
  Eigen::VectorXd y(6);
  y << 0, 0, 0, 1, 1, 1;
  const auto fit = fit_regression(LearnerSpec::logistic_ridge(1e-8), X, y);
  Eigen::MatrixXd probe(2, 1);
  probe << -1e6, 1e6;
  const Eigen::VectorXd pred = fit->predict(probe);
  CHECK(pred(0) >= 1e-12);
  CHECK(pred(1) <= 1.0 - 1e-12);
  CHECK(pred(0) < 1e-6);
  CHECK(pred(1) > 1.0 - 1e-6);
}

TEST_CASE("pmf learners: counting, closed-form softmax, simplex invariants") {
  Eigen::MatrixXd X0(5, 0);  // zero features: intercept-only
  const std::vector<int> labels{0, 0, 1, 2, 2};

  const auto mean_fit = fit_pmf(LearnerSpec::mean(), X0, labels, 3);
  const Eigen::MatrixXd P = mean_fit->predict_pmf(X0);
  CHECK(P(0, 0) == doctest::Approx(0.4).epsilon(1e-9));
  CHECK(P(0, 1) == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(P(0, 2) == doctest::Approx(0.4).epsilon(1e-9));

  // intercept-only softmax has its optimum at the empirical frequencies
  const auto soft = fit_pmf(LearnerSpec::softmax(0.0), X0, labels, 3);
  const Eigen::MatrixXd Ps = soft->predict_pmf(X0);
  CHECK(Ps(0, 0) == doctest::Approx(0.4).epsilon(1e-6));
  CHECK(Ps(0, 1) == doctest::Approx(0.2).epsilon(1e-6));
  CHECK(Ps(0, 2) == doctest::Approx(0.4).epsilon(1e-6));

  Eigen::MatrixXd X(5, 1);
  X << 0, 1, 2, 3, 4;
  for (const LearnerSpec& spec :
       {LearnerSpec::mean(), LearnerSpec::cell_mean(), LearnerSpec::softmax(),
        LearnerSpec::knn(2)}) {
    const auto fit = fit_pmf(spec, X, labels, 3);
    const Eigen::MatrixXd Q = fit->predict_pmf(X);
    for (int i = 0; i < Q.rows(); ++i) {
      CHECK(std::abs(Q.row(i).sum() - 1.0) < 1e-10);
      CHECK(Q.row(i).minCoeff() >= kPmfFloor);
    }
  }

  // empty class stays reachable through the floor
  const std::vector<int> degenerate{0, 0, 0, 0, 0};
  const auto dfit = fit_pmf(LearnerSpec::mean(), X, degenerate, 3);
  CHECK(dfit->predict_pmf(X)(0, 2) >= kPmfFloor);
}

TEST_CASE("softmax recovers a known multinomial logit") {
  // two classes, one feature: P(1|x) = sigmoid(-0.5 + 1.5x)
  Rng rng(99);
  const int n = 4000;
  Eigen::MatrixXd X(n, 1);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 2.0 * rng.uniform() - 1.0;
    const double p1 = 1.0 / (1.0 + std::exp(-(-0.5 + 1.5 * X(i, 0))));
    labels[i] = rng.bernoulli(p1) ? 1 : 0;
  }
  const auto fit = fit_pmf(LearnerSpec::softmax(), X, labels, 2);
  Eigen::MatrixXd probe(3, 1);
  probe << -0.5, 0.0, 0.5;
  const Eigen::MatrixXd P = fit->predict_pmf(probe);
  for (int r = 0; r < 3; ++r) {
    const double truth = 1.0 / (1.0 + std::exp(-(-0.5 + 1.5 * probe(r, 0))));
    CHECK(P(r, 1) == doctest::Approx(truth).epsilon(0.08));
  }
}

TEST_CASE("cell_mean is a saturated fit over distinct rows") {
  Eigen::MatrixXd X(6, 2);
  X << 0, 0, 0, 0, 0, 1, 0, 1, 1, 0, 1, 0;
  Eigen::VectorXd y(6);
  y << 1, 3, 5, 7, 2, 4;
  const auto fit = fit_regression(LearnerSpec::cell_mean(), X, y);
  Eigen::MatrixXd probe(4, 2);
  probe << 0, 0, 0, 1, 1, 0, 9, 9;
  const Eigen::VectorXd pred = fit->predict(probe);
  CHECK(pred(0) == doctest::Approx(2.0));
  CHECK(pred(1) == doctest::Approx(6.0));
  CHECK(pred(2) == doctest::Approx(3.0));
  CHECK(pred(3) == doctest::Approx(y.mean()));  // unseen cell -> global mean
}

TEST_CASE("boosted stumps recover a step function") {
  const int n = 300;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  Rng rng(3);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.uniform();
    X(i, 1) = rng.uniform();
    y(i) = (X(i, 0) > 0.5 ? 2.0 : -1.0);
  }
  const auto fit = fit_regression(LearnerSpec::boosted_stumps(120, 0.3), X, y);
  Eigen::MatrixXd probe(2, 2);
  probe << 0.25, 0.5, 0.75, 0.5;
  const Eigen::VectorXd pred = fit->predict(probe);
  CHECK(pred(0) == doctest::Approx(-1.0).epsilon(0.05));
  CHECK(pred(1) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("knn regression averages the nearest responses deterministically") {
  Eigen::MatrixXd X(4, 1);
  X << 0.0, 0.1, 1.0, 1.1;
  Eigen::VectorXd y(4);
  y << 1.0, 2.0, 10.0, 12.0;
  const auto fit = fit_regression(LearnerSpec::knn(2), X, y);
  Eigen::MatrixXd probe(2, 1);
  probe << 0.05, 1.05;
  const Eigen::VectorXd pred = fit->predict(probe);
  CHECK(pred(0) == doctest::Approx(1.5));
  CHECK(pred(1) == doctest::Approx(11.0));

  // same spec, same data -> identical predictions
  const auto fit2 = fit_regression(LearnerSpec::knn(2), X, y);
  CHECK((fit2->predict(probe) - pred).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("predict validates the feature dimension") {
  Eigen::MatrixXd X(3, 2);
  X << 1, 2, 3, 4, 5, 6;
  Eigen::VectorXd y(3);
  y << 1, 2, 3;
  const auto fit = fit_regression(LearnerSpec::linear_ridge(), X, y);
  Eigen::MatrixXd bad(1, 3);
  bad << 1, 2, 3;
  CHECK_THROWS_AS(fit->predict(bad), ContractError);
}

TEST_CASE("fit rejects non-finite inputs and bad labels") {
  Eigen::MatrixXd X(2, 1);
  X << 1.0, std::nan("");
  Eigen::VectorXd y(2);
  y << 1, 2;
  CHECK_THROWS_AS(fit_regression(LearnerSpec::mean(), X, y), ContractError);
  Eigen::MatrixXd X2(2, 1);
  X2 << 1.0, 2.0;
  CHECK_THROWS_AS(fit_pmf(LearnerSpec::mean(), X2, {0, 5}, 3), ContractError);
}

TEST_CASE("cv_select picks the better learner and matches a hand-run 2-fold cv") {
  // strongly linear data
  const int n = 8;
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = i;
    y(i) = 2.0 * i + ((i % 2 == 0) ? 0.01 : -0.01);
  }
  const std::uint64_t seed = 2024;
  const std::vector<LearnerSpec> stack{LearnerSpec::mean(),
                                       LearnerSpec::linear_ridge(0.0)};
  CvSelection info;
  const auto fit = cv_select(stack, X, y, 2, CvLoss::Squared, seed, &info);
  CHECK(info.chosen == 1);
  CHECK(fit->kind_name() == "linear_ridge");
  CHECK(info.cv_losses[info.chosen] <= info.cv_losses[0]);

  // hand-run the same 2-fold computation
  const FoldAssignment fa = make_folds(n, 2, seed);
  double mean_loss = 0.0, ridge_loss = 0.0;
  for (int j = 0; j < 2; ++j) {
    const auto train = training_rows(fa, j);
    const auto valid = fa.fold_rows(j);
    // mean learner by hand
    double mu = 0.0;
    for (int i : train) mu += y(i);
    mu /= train.size();
    // ridge lambda=0 by hand: 2x2 normal equations with intercept
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i : train) {
      sx += X(i, 0);
      sy += y(i);
      sxx += X(i, 0) * X(i, 0);
      sxy += X(i, 0) * y(i);
    }
    const double m = train.size();
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    const double icept = (sy - slope * sx) / m;
    for (int i : valid) {
      mean_loss += (y(i) - mu) * (y(i) - mu);
      const double pred = icept + slope * X(i, 0);
      ridge_loss += (y(i) - pred) * (y(i) - pred);
    }
  }
  mean_loss /= n;
  ridge_loss /= n;
  CHECK(info.cv_losses[0] == doctest::Approx(mean_loss).epsilon(1e-10));
  CHECK(info.cv_losses[1] == doctest::Approx(ridge_loss).epsilon(1e-10));
}

TEST_CASE("cv_select degenerate stacks and tie-breaking") {
  Eigen::MatrixXd X(6, 1);
  X << 1, 2, 3, 4, 5, 6;
  Eigen::VectorXd y(6);
  y << 1, 0, 1, 0, 1, 0;
  CvSelection info;
  const auto only = cv_select({LearnerSpec::mean()}, X, y, 2, CvLoss::Squared, 1, &info);
  CHECK(only->kind_name() == "mean");

  // identical candidates: the first wins
  const auto tie = cv_select({LearnerSpec::mean(), LearnerSpec::mean()}, X, y, 2,
                             CvLoss::Squared, 1, &info);
  CHECK(info.chosen == 0);
}
