#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "msmkit/dataset.hpp"

namespace msmkit {

// Canonical link/loss pairs. Only these three are supported; each pairs a
// mean function with the loss whose gradient in the linear predictor is the
// residual m(x) - theta.
enum class LinkKind { Logistic, Identity, Log };

LinkKind parse_link(const std::string& name);
std::string link_name(LinkKind link);

// Linear predictors are clamped to +/-35 before exponentiation; beyond that
// the logistic/log means are constant to ~1e-15.
inline constexpr double kLinearPredictorClamp = 35.0;

double link_value(LinkKind link, double x);
double link_slope(LinkKind link, double x);

// Loss paired with the link: cross-entropy (logistic), half squared error
// (identity), Poisson deviance part (log). d/dx loss(theta, m(x)) = m(x)-theta
// for every pair; tests verify this by finite differences.
double canonical_loss(LinkKind link, double theta, double m);

// ---------------------------------------------------------------------------
// Feature map phi(abar, v). Declarative grammar: each feature is a product of
// factors drawn from {intercept, sum_treatment, mean_treatment,
// treatment_at[t], baseline[j]}. per_time_treatment expands to tau
// treatment_at terms at parse time.
// ---------------------------------------------------------------------------

struct FeatureFactor {
  enum class Kind { Intercept, SumTreatment, MeanTreatment, TreatmentAt, Baseline };
  Kind kind = Kind::Intercept;
  int index = 0;  // time for TreatmentAt (1-based), column for Baseline (0-based)
};

struct FeatureTerm {
  std::vector<FeatureFactor> factors;  // product of factors
  std::string label;
};

class FeatureMap {
 public:
  FeatureMap(std::vector<FeatureTerm> terms, int tau);

  int dim() const { return static_cast<int>(terms_.size()); }
  int tau() const { return tau_; }

  Eigen::VectorXd eval(const std::vector<int>& treatments,
                       const Eigen::VectorXd& baseline) const;

  const std::vector<FeatureTerm>& terms() const { return terms_; }
  std::string describe() const;

  // Parses a comma-separated feature list, e.g.
  //   "intercept, sum_treatment" or "intercept, baseline:L1*mean_treatment".
  // Baseline columns are resolved against the schema's baseline names.
  static FeatureMap parse(const std::string& text, int tau,
                          const std::vector<std::string>& baseline_names);

  static FeatureMap intercept_sum(int tau);   // (1, sum_t a_t)
  static FeatureMap intercept_mean(int tau);  // (1, sum_t a_t / tau)

 private:
  std::vector<FeatureTerm> terms_;
  int tau_;
};

struct WorkingModel {
  LinkKind link = LinkKind::Logistic;
  FeatureMap features;

  int dim() const { return features.dim(); }
  double mean(double x) const { return link_value(link, x); }
  double mean_slope(double x) const { return link_slope(link, x); }

  Eigen::VectorXd phi(const std::vector<int>& treatments,
                      const Eigen::VectorXd& baseline) const {
    return features.eval(treatments, baseline);
  }
  // phi along the realized path of unit i.
  Eigen::VectorXd phi_observed(const TrajectoryDataset& ds, int i) const;
};

}  // namespace msmkit
