#include <cmath>

#include "doctest.h"
#include "msmkit/common.hpp"
#include "msmkit/working_model.hpp"

using namespace msmkit;

TEST_CASE("link values") {
  const WorkingModel logit{LinkKind::Logistic, FeatureMap::intercept_sum(1)};
  CHECK(logit.mean(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(logit.mean(std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-12));
  const WorkingModel ident{LinkKind::Identity, FeatureMap::intercept_sum(1)};
  CHECK(ident.mean(-0.21) == -0.21);
  CHECK(link_value(LinkKind::Log, 0.0) == doctest::Approx(1.0));
  // clamping keeps extreme inputs finite
  CHECK(std::isfinite(link_value(LinkKind::Logistic, 1e9)));
  CHECK(std::isfinite(link_value(LinkKind::Log, 1e9)));
}

TEST_CASE("link slopes match central differences") {
  CHECK(link_slope(LinkKind::Logistic, 0.0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(link_slope(LinkKind::Identity, 123.4) == 1.0);
  const double h = 1e-6;
  for (LinkKind link : {LinkKind::Logistic, LinkKind::Identity, LinkKind::Log}) {
    for (double x : {0.7, -1.3, 0.0, 2.2}) {
      const double fd = (link_value(link, x + h) - link_value(link, x - h)) / (2 * h);
      CHECK(link_slope(link, x) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("canonical pair identity: d/dx loss(theta, m(x)) = m(x) - theta") {
  Rng rng(42);
  const double h = 1e-6;
  for (LinkKind link : {LinkKind::Logistic, LinkKind::Identity, LinkKind::Log}) {
    for (int rep = 0; rep < 40; ++rep) {
      const double x = -2.0 + 4.0 * rng.uniform();
      double theta = -1.0 + 3.0 * rng.uniform();
      if (link == LinkKind::Logistic) theta = rng.uniform();  // needs [0,1]
      if (link == LinkKind::Log) theta = std::abs(theta);
      const double up = canonical_loss(link, theta, link_value(link, x + h));
      const double dn = canonical_loss(link, theta, link_value(link, x - h));
      const double fd = (up - dn) / (2 * h);
      const double expect = link_value(link, x) - theta;
      CHECK(fd == doctest::Approx(expect).epsilon(1e-5));
      CHECK(std::abs(fd - expect) < 1e-6 * std::max(1.0, std::abs(expect)) + 1e-6);
    }
  }
}

TEST_CASE("parse_link rejects non-canonical names") {
  CHECK(parse_link("logistic") == LinkKind::Logistic);
  CHECK_THROWS_AS(parse_link("probit"), ContractError);
  CHECK_THROWS_AS(parse_link("cloglog"), ContractError);
}

TEST_CASE("feature map grammar") {
  const FeatureMap fm = FeatureMap::parse("intercept, sum_treatment", 4, {});
  CHECK(fm.dim() == 2);
  Eigen::VectorXd v(0);
  const Eigen::VectorXd phi = fm.eval({1, 0, 3, 2}, v);
  CHECK(phi(0) == 1.0);
  CHECK(phi(1) == 6.0);

  // the 8-period application shape: (1, sum a_t / tau)
  const FeatureMap fm8 = FeatureMap::parse("intercept, mean_treatment", 8, {});
  const Eigen::VectorXd phi8 = fm8.eval({1, 2, 3, 4, 0, 0, 4, 2}, v);
  CHECK(phi8(1) == doctest::Approx(16.0 / 8.0).epsilon(1e-15));

  const FeatureMap per = FeatureMap::parse("intercept, per_time_treatment", 3, {});
  CHECK(per.dim() == 4);
  const Eigen::VectorXd php = per.eval({2, 0, 1}, v);
  CHECK(php(1) == 2.0);
  CHECK(php(3) == 1.0);

  Eigen::VectorXd base(2);
  base << 1.5, -2.0;
  const FeatureMap fb =
      FeatureMap::parse("intercept, baseline:w, baseline:x*sum_treatment", 2, {"w", "x"});
  const Eigen::VectorXd phb = fb.eval({1, 1}, base);
  CHECK(phb(1) == 1.5);
  CHECK(phb(2) == doctest::Approx(-4.0));

  CHECK_THROWS_AS(FeatureMap::parse("intercept, treatment[5]", 2, {}), ContractError);
  CHECK_THROWS_AS(FeatureMap::parse("intercept, baseline:zzz", 2, {"w"}), ContractError);
  CHECK_THROWS_AS(FeatureMap::parse("spline(a)", 2, {}), ContractError);
}
