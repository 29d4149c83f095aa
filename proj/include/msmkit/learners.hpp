#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "msmkit/common.hpp"

namespace msmkit {

// Probability floor for pmf outputs. Predictions are mixed with the uniform
// pmf so every entry is >= kPmfFloor and rows still sum to 1 exactly.
inline constexpr double kPmfFloor = 1e-12;
inline constexpr double kProbClip = 1e-12;

enum class LearnerKind {
  Mean,
  CellMean,  // per-cell means over distinct feature rows (saturated fits)
  LinearRidge,
  LogisticRidge,
  MultinomialSoftmax,
  BoostedStumps,
  Knn,
  Stack,  // discrete selection by cross-validated loss
};

LearnerKind parse_learner_kind(const std::string& name);
std::string learner_kind_name(LearnerKind kind);

enum class CvLoss { Squared, CrossEntropy, Multinomial };

struct LearnerSpec {
  LearnerKind kind = LearnerKind::Mean;
  std::map<std::string, double> hyper;  // per-kind numeric hyperparameters
  std::vector<LearnerSpec> stack;       // members when kind == Stack
  int stack_folds = 5;
  std::uint64_t seed = 17;

  double hp(const std::string& key, double fallback) const {
    auto it = hyper.find(key);
    return it == hyper.end() ? fallback : it->second;
  }

  static LearnerSpec mean() { return LearnerSpec{}; }
  static LearnerSpec cell_mean();
  static LearnerSpec linear_ridge(double lambda = -1.0);  // -1 => 1e-4 * n
  static LearnerSpec logistic_ridge(double lambda = -1.0);
  static LearnerSpec softmax(double lambda = -1.0);  // -1 => 1e-6 * n
  static LearnerSpec boosted_stumps(int rounds = 200, double rate = 0.1);
  static LearnerSpec knn(int k = -1);  // -1 => max(10, n^0.4)
  static LearnerSpec stack_of(std::vector<LearnerSpec> members, int folds = 3);

  std::string describe() const;
};

// Immutable fitted predictor. Regression learners predict conditional means;
// pmf learners predict K-vectors on the probability simplex.
class FittedLearner {
 public:
  virtual ~FittedLearner() = default;
  virtual Eigen::VectorXd predict(const Eigen::MatrixXd& X) const = 0;
  virtual Eigen::MatrixXd predict_pmf(const Eigen::MatrixXd& X) const;
  virtual int feature_dim() const = 0;
  virtual int output_arity() const { return 1; }
  virtual std::string kind_name() const = 0;
  const std::vector<std::string>& warnings() const { return warnings_; }

 protected:
  void check_dim(const Eigen::MatrixXd& X) const;
  std::vector<std::string> warnings_;
};

using FittedPtr = std::shared_ptr<const FittedLearner>;

FittedPtr fit_regression(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                         const Eigen::VectorXd& y,
                         const Eigen::VectorXd& w = Eigen::VectorXd());

// Fits a pmf learner for integer class labels in {0,...,K-1}.
FittedPtr fit_pmf(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                  const std::vector<int>& labels, int n_classes,
                  const Eigen::VectorXd& w = Eigen::VectorXd());

// Discrete super learner: picks the stack member with minimal J-fold
// cross-validated loss (ties: first in stack order), then refits on all data.
struct CvSelection {
  int chosen = 0;
  std::vector<double> cv_losses;
};

FittedPtr cv_select(const std::vector<LearnerSpec>& stack,
                    const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    int folds, CvLoss loss, std::uint64_t seed,
                    CvSelection* info = nullptr);

FittedPtr cv_select_pmf(const std::vector<LearnerSpec>& stack,
                        const Eigen::MatrixXd& X, const std::vector<int>& labels,
                        int n_classes, int folds, std::uint64_t seed,
                        CvSelection* info = nullptr);

// Entry points that dispatch Stack specs to cv_select and everything else to
// the plain fitters.
FittedPtr fit_regression_auto(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y,
                              CvSelection* info = nullptr);
FittedPtr fit_pmf_auto(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                       const std::vector<int>& labels, int n_classes,
                       CvSelection* info = nullptr);

}  // namespace msmkit
