#include "msmkit/learners.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "msmkit/crossfit.hpp"

namespace msmkit {

LearnerKind parse_learner_kind(const std::string& name) {
  if (name == "mean") return LearnerKind::Mean;
  if (name == "cell_mean") return LearnerKind::CellMean;
  if (name == "linear_ridge") return LearnerKind::LinearRidge;
  if (name == "logistic_ridge") return LearnerKind::LogisticRidge;
  if (name == "multinomial_softmax") return LearnerKind::MultinomialSoftmax;
  if (name == "boosted_stumps") return LearnerKind::BoostedStumps;
  if (name == "knn") return LearnerKind::Knn;
  if (name == "stack") return LearnerKind::Stack;
  throw ContractError("unknown learner kind '" + name + "'");
}

std::string learner_kind_name(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::Mean: return "mean";
    case LearnerKind::CellMean: return "cell_mean";
    case LearnerKind::LinearRidge: return "linear_ridge";
    case LearnerKind::LogisticRidge: return "logistic_ridge";
    case LearnerKind::MultinomialSoftmax: return "multinomial_softmax";
    case LearnerKind::BoostedStumps: return "boosted_stumps";
    case LearnerKind::Knn: return "knn";
    case LearnerKind::Stack: return "stack";
  }
  return "?";
}

LearnerSpec LearnerSpec::cell_mean() {
  LearnerSpec s;
  s.kind = LearnerKind::CellMean;
  return s;
}

LearnerSpec LearnerSpec::linear_ridge(double lambda) {
  LearnerSpec s;
  s.kind = LearnerKind::LinearRidge;
  if (lambda >= 0) s.hyper["lambda"] = lambda;
  return s;
}

LearnerSpec LearnerSpec::logistic_ridge(double lambda) {
  LearnerSpec s;
  s.kind = LearnerKind::LogisticRidge;
  if (lambda >= 0) s.hyper["lambda"] = lambda;
  return s;
}

LearnerSpec LearnerSpec::softmax(double lambda) {
  LearnerSpec s;
  s.kind = LearnerKind::MultinomialSoftmax;
  if (lambda >= 0) s.hyper["lambda"] = lambda;
  return s;
}

LearnerSpec LearnerSpec::boosted_stumps(int rounds, double rate) {
  LearnerSpec s;
  s.kind = LearnerKind::BoostedStumps;
  s.hyper["rounds"] = rounds;
  s.hyper["learning_rate"] = rate;
  return s;
}

LearnerSpec LearnerSpec::knn(int k) {
  LearnerSpec s;
  s.kind = LearnerKind::Knn;
  if (k >= 1) s.hyper["k"] = k;
  return s;
}

LearnerSpec LearnerSpec::stack_of(std::vector<LearnerSpec> members, int folds) {
  LearnerSpec s;
  s.kind = LearnerKind::Stack;
  s.stack = std::move(members);
  s.stack_folds = folds;
  return s;
}

std::string LearnerSpec::describe() const {
  if (kind != LearnerKind::Stack) return learner_kind_name(kind);
  std::ostringstream os;
  os << "stack(";
  for (std::size_t i = 0; i < stack.size(); ++i) {
    if (i) os << ",";
    os << stack[i].describe();
  }
  os << ")";
  return os.str();
}

Eigen::MatrixXd FittedLearner::predict_pmf(const Eigen::MatrixXd&) const {
  throw ContractError("learner '" + kind_name() + "' has no pmf output");
}

void FittedLearner::check_dim(const Eigen::MatrixXd& X) const {
  if (static_cast<int>(X.cols()) != feature_dim()) {
    throw ContractError("predict: feature dimension " +
                        std::to_string(X.cols()) + " != training dimension " +
                        std::to_string(feature_dim()));
  }
}

namespace {

Eigen::VectorXd resolve_weights(const Eigen::VectorXd& w, int n) {
  if (w.size() == 0) return Eigen::VectorXd::Ones(n);
  if (static_cast<int>(w.size()) != n) {
    throw ContractError("weights length != n");
  }
  if (!w.allFinite() || w.minCoeff() < 0) {
    throw ContractError("weights must be finite and nonnegative");
  }
  return w;
}

void check_inputs(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw ContractError("X rows != y length");
  if (X.rows() < 1) throw ContractError("need n >= 1 rows");
  if (!X.allFinite()) throw ContractError("non-finite feature value");
  if (!y.allFinite()) throw ContractError("non-finite response value");
}

// Mix with the uniform pmf so entries are >= kPmfFloor and sums stay 1.
void apply_pmf_floor(Eigen::MatrixXd& P) {
  const int K = static_cast<int>(P.cols());
  const double eps = static_cast<double>(K) * kPmfFloor;
  P = (1.0 - eps) * P;
  P.array() += kPmfFloor;
}

// ---------------------------------------------------------------------------
// Mean learner
// ---------------------------------------------------------------------------

class MeanLearner final : public FittedLearner {
 public:
  MeanLearner(double value, int p) : value_(value), p_(p) {}
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override {
    check_dim(X);
    return Eigen::VectorXd::Constant(X.rows(), value_);
  }
  int feature_dim() const override { return p_; }
  std::string kind_name() const override { return "mean"; }

 private:
  double value_;
  int p_;
};

class MeanPmfLearner final : public FittedLearner {
 public:
  MeanPmfLearner(Eigen::VectorXd freq, int p) : freq_(std::move(freq)), p_(p) {}
  Eigen::VectorXd predict(const Eigen::MatrixXd&) const override {
    throw ContractError("pmf learner has no scalar prediction");
  }
  Eigen::MatrixXd predict_pmf(const Eigen::MatrixXd& X) const override {
    check_dim(X);
    Eigen::MatrixXd P = freq_.transpose().replicate(X.rows(), 1);
    apply_pmf_floor(P);
    return P;
  }
  int feature_dim() const override { return p_; }
  int output_arity() const override { return static_cast<int>(freq_.size()); }
  std::string kind_name() const override { return "mean"; }

 private:
  Eigen::VectorXd freq_;
  int p_;
};

// ---------------------------------------------------------------------------
// Cell-mean learner: saturated fits over distinct feature rows. Unseen cells
// fall back to the global aggregate.
// ---------------------------------------------------------------------------

struct RowKeyLess {
  bool operator()(const std::vector<double>& a,
                  const std::vector<double>& b) const {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  }
};

std::vector<double> row_key(const Eigen::MatrixXd& X, int i) {
  std::vector<double> key(X.cols());
  for (int j = 0; j < X.cols(); ++j) key[j] = X(i, j);
  return key;
}

class CellMeanLearner final : public FittedLearner {
 public:
  CellMeanLearner(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& w) {
    p_ = static_cast<int>(X.cols());
    double tot_w = 0.0, tot_wy = 0.0;
    for (int i = 0; i < X.rows(); ++i) {
      auto& cell = cells_[row_key(X, i)];
      cell.first += w(i);
      cell.second += w(i) * y(i);
      tot_w += w(i);
      tot_wy += w(i) * y(i);
    }
    global_ = tot_w > 0 ? tot_wy / tot_w : 0.0;
  }
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override {
    check_dim(X);
    Eigen::VectorXd out(X.rows());
    for (int i = 0; i < X.rows(); ++i) {
      auto it = cells_.find(row_key(X, i));
      out(i) = (it != cells_.end() && it->second.first > 0)
                   ? it->second.second / it->second.first
                   : global_;
    }
    return out;
  }
  int feature_dim() const override { return p_; }
  std::string kind_name() const override { return "cell_mean"; }

 private:
  std::map<std::vector<double>, std::pair<double, double>, RowKeyLess> cells_;
  double global_ = 0.0;
  int p_ = 0;
};

class CellMeanPmfLearner final : public FittedLearner {
 public:
  CellMeanPmfLearner(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                     int K, const Eigen::VectorXd& w)
      : K_(K), global_(Eigen::VectorXd::Zero(K)) {
    p_ = static_cast<int>(X.cols());
    for (int i = 0; i < X.rows(); ++i) {
      auto& cell = cells_[row_key(X, i)];
      if (cell.size() == 0) cell = Eigen::VectorXd::Zero(K_);
      cell(labels[i]) += w(i);
      global_(labels[i]) += w(i);
    }
  }
  Eigen::VectorXd predict(const Eigen::MatrixXd&) const override {
    throw ContractError("pmf learner has no scalar prediction");
  }
  Eigen::MatrixXd predict_pmf(const Eigen::MatrixXd& X) const override {
    check_dim(X);
    Eigen::MatrixXd P(X.rows(), K_);
    const Eigen::VectorXd global_pmf = global_ / global_.sum();
    for (int i = 0; i < X.rows(); ++i) {
      auto it = cells_.find(row_key(X, i));
      if (it != cells_.end() && it->second.sum() > 0) {
        P.row(i) = (it->second / it->second.sum()).transpose();
      } else {
        P.row(i) = global_pmf.transpose();
      }
    }
    apply_pmf_floor(P);
    return P;
  }
  int feature_dim() const override { return p_; }
  int output_arity() const override { return K_; }
  std::string kind_name() const override { return "cell_mean"; }

 private:
  int K_;
  std::map<std::vector<double>, Eigen::VectorXd, RowKeyLess> cells_;
  Eigen::VectorXd global_;
  int p_ = 0;
};

// ---------------------------------------------------------------------------
// Linear ridge. Intercept unpenalized; penalty applies to raw-scale slopes.
// ---------------------------------------------------------------------------

class LinearRidgeLearner final : public FittedLearner {
 public:
  LinearRidgeLearner(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const Eigen::VectorXd& w, double lambda) {
    const int n = static_cast<int>(X.rows());
    const int p = static_cast<int>(X.cols());
    p_ = p;
    Eigen::MatrixXd Xt(n, p + 1);
    Xt.col(0).setOnes();
    Xt.rightCols(p) = X;
    Eigen::MatrixXd G = Xt.transpose() * w.asDiagonal() * Xt;
    Eigen::VectorXd b = Xt.transpose() * (w.cwiseProduct(y));
    for (int j = 1; j <= p; ++j) G(j, j) += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
    coef_ = ldlt.solve(b);
    if (ldlt.info() != Eigen::Success || !coef_.allFinite()) {
      // Degenerate system: apply a regularization floor and retry.
      const double floor = 1e-8 * (G.trace() / (p + 1) + 1.0);
      for (int j = 0; j <= p; ++j) G(j, j) += floor;
      coef_ = G.ldlt().solve(b);
      warnings_.push_back("linear_ridge: degenerate system, floor applied");
      if (!coef_.allFinite()) throw SolverError("linear_ridge: solve failed");
    }
  }
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override {
    check_dim(X);
    return Eigen::VectorXd::Constant(X.rows(), coef_(0)) +
           X * coef_.tail(p_);
  }
  int feature_dim() const override { return p_; }
  std::string kind_name() const override { return "linear_ridge"; }
  const Eigen::VectorXd& coefficients() const { return coef_; }

 private:
  Eigen::VectorXd coef_;
  int p_ = 0;
};

// ---------------------------------------------------------------------------
// Logistic ridge via iteratively reweighted least squares. Accepts fractional
// responses in [0,1]; predictions are clipped away from {0,1}.
// ---------------------------------------------------------------------------

class LogisticRidgeLearner final : public FittedLearner {
 public:
  LogisticRidgeLearner(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, double lambda) {
    const int n = static_cast<int>(X.rows());
    const int p = static_cast<int>(X.cols());
    p_ = p;
    if (y.minCoeff() < 0.0 || y.maxCoeff() > 1.0) {
      throw ContractError("logistic_ridge: responses must lie in [0,1]");
    }
    Eigen::MatrixXd Xt(n, p + 1);
    Xt.col(0).setOnes();
    Xt.rightCols(p) = X;
    coef_ = Eigen::VectorXd::Zero(p + 1);
    const double W = w.sum();
    const double ybar = std::clamp(w.dot(y) / std::max(W, 1e-300), 1e-6, 1.0 - 1e-6);
    coef_(0) = std::log(ybar / (1.0 - ybar));

    auto objective = [&](const Eigen::VectorXd& beta) {
      const Eigen::VectorXd eta = Xt * beta;
      double obj = 0.0;
      for (int i = 0; i < n; ++i) {
        const double z = std::clamp(eta(i), -35.0, 35.0);
        // -y*eta + log(1+exp(eta)), numerically stable form
        obj += w(i) * (std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) -
                       y(i) * z);
      }
      obj += 0.5 * lambda * beta.tail(p).squaredNorm();
      return obj;
    };

    double cur = objective(coef_);
    bool converged = false;
    for (int iter = 0; iter < 100; ++iter) {
      const Eigen::VectorXd eta = Xt * coef_;
      Eigen::VectorXd mu(n), s(n);
      for (int i = 0; i < n; ++i) {
        const double z = std::clamp(eta(i), -35.0, 35.0);
        mu(i) = 1.0 / (1.0 + std::exp(-z));
        s(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-10) * w(i);
      }
      Eigen::VectorXd grad = Xt.transpose() * (w.cwiseProduct(mu - y));
      grad.tail(p) += lambda * coef_.tail(p);
      if (grad.lpNorm<Eigen::Infinity>() <= 1e-10 * std::max(1.0, W)) {
        converged = true;
        break;
      }
      Eigen::MatrixXd H = Xt.transpose() * s.asDiagonal() * Xt;
      for (int j = 1; j <= p; ++j) H(j, j) += lambda;
      H.diagonal().array() += 1e-12;
      Eigen::VectorXd step = H.ldlt().solve(grad);
      if (!step.allFinite()) break;
      double scale = 1.0;
      for (int half = 0; half < 30; ++half) {
        const Eigen::VectorXd cand = coef_ - scale * step;
        const double obj = objective(cand);
        if (obj <= cur + 1e-12) {
          coef_ = cand;
          cur = obj;
          break;
        }
        scale *= 0.5;
      }
    }
    if (!converged && lambda <= 0.0) {
      warnings_.push_back("logistic_ridge: IRLS hit iteration cap (lambda=0)");
    }
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override {
    check_dim(X);
    Eigen::VectorXd eta =
        Eigen::VectorXd::Constant(X.rows(), coef_(0)) + X * coef_.tail(p_);
    Eigen::VectorXd out(X.rows());
    for (int i = 0; i < out.size(); ++i) {
      const double z = std::clamp(eta(i), -35.0, 35.0);
      out(i) = std::clamp(1.0 / (1.0 + std::exp(-z)), kProbClip, 1.0 - kProbClip);
    }
    return out;
  }
  int feature_dim() const override { return p_; }
  std::string kind_name() const override { return "logistic_ridge"; }
  const Eigen::VectorXd& coefficients() const { return coef_; }

 private:
  Eigen::VectorXd coef_;
  int p_ = 0;
};

// ---------------------------------------------------------------------------
// Multinomial softmax fitted by full-batch gradient descent with Armijo line
// search and Barzilai-Borwein step seeding. Class 0 logits are pinned to 0;
// features are standardized internally; intercepts start at log-frequency.
// ---------------------------------------------------------------------------

class SoftmaxLearner final : public FittedLearner {
 public:
  SoftmaxLearner(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                 int K, const Eigen::VectorXd& w, double lambda,
                 const SoftmaxLearner* warm = nullptr) {
    const int n = static_cast<int>(X.rows());
    const int p = static_cast<int>(X.cols());
    p_ = p;
    K_ = K;

    mean_ = X.colwise().mean();
    sd_.resize(p);
    for (int j = 0; j < p; ++j) {
      const double var =
          (X.col(j).array() - mean_(j)).square().sum() / std::max(1, n);
      sd_(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    Eigen::MatrixXd Z(n, p + 1);
    Z.col(0).setOnes();
    for (int j = 0; j < p; ++j) Z.col(j + 1) = (X.col(j).array() - mean_(j)) / sd_(j);

    const double W = std::max(w.sum(), 1e-300);
    Eigen::VectorXd freq = Eigen::VectorXd::Constant(K, 1e-8);
    for (int i = 0; i < n; ++i) freq(labels[i]) += w(i);
    freq /= freq.sum();

    // Parameters: (p+1) x (K-1); class 0 pinned at 0. A warm start from a fit
    // on a superset sample only changes the optimization path, not the
    // optimum (the penalized objective is strictly convex).
    B_ = Eigen::MatrixXd::Zero(p + 1, K - 1);
    for (int k = 1; k < K; ++k) B_(0, k - 1) = std::log(freq(k) / freq(0));
    if (warm != nullptr && warm->B_.rows() == p + 1 && warm->B_.cols() == K - 1) {
      B_ = warm->B_;
    }
    if (K == 1) return;  // degenerate single-class pmf

    Eigen::MatrixXd P(n, K);
    auto eval = [&](const Eigen::MatrixXd& B, Eigen::MatrixXd* grad) {
      // mean weighted cross-entropy + (lambda/(2W))*||B without intercept||^2
      Eigen::MatrixXd logits = Z * B;  // n x (K-1)
      double loss = 0.0;
      for (int i = 0; i < n; ++i) {
        double mx = 0.0;
        for (int k = 0; k + 1 < K; ++k) mx = std::max(mx, logits(i, k));
        double denom = std::exp(-mx);
        for (int k = 0; k + 1 < K; ++k) denom += std::exp(logits(i, k) - mx);
        const double log_denom = mx + std::log(denom);
        const double ll = (labels[i] == 0 ? 0.0 : logits(i, labels[i] - 1)) - log_denom;
        loss -= w(i) * ll;
        if (grad) {
          P(i, 0) = std::exp(-log_denom);
          for (int k = 1; k < K; ++k) P(i, k) = std::exp(logits(i, k - 1) - log_denom);
        }
      }
      loss /= W;
      loss += 0.5 * (lambda / W) * B.bottomRows(p).squaredNorm();
      if (grad) {
        Eigen::MatrixXd R(n, K - 1);
        for (int i = 0; i < n; ++i) {
          for (int k = 1; k < K; ++k) {
            R(i, k - 1) = w(i) * (P(i, k) - (labels[i] == k ? 1.0 : 0.0));
          }
        }
        *grad = (Z.transpose() * R) / W;
        grad->bottomRows(p) += (lambda / W) * B.bottomRows(p);
      }
      return loss;
    };

    // Barzilai-Borwein steps with a non-monotone (last-10) Armijo check; a
    // monotone check fights the BB step and roughly triples the iterations.
    Eigen::MatrixXd grad, grad_prev, B_prev;
    double loss = eval(B_, &grad);
    double step = 1.0;
    const double tol = 1e-7;
    std::vector<double> recent{loss};
    for (int iter = 0; iter < 2000; ++iter) {
      if (grad.lpNorm<Eigen::Infinity>() <= tol) break;
      if (iter > 0) {
        const Eigen::MatrixXd ds = B_ - B_prev;
        const Eigen::MatrixXd dg = grad - grad_prev;
        const double denom = (ds.array() * dg.array()).sum();
        if (denom > 1e-300) {
          step = std::clamp(ds.squaredNorm() / denom, 1e-6, 1e6);
        }
      }
      const double g2 = grad.squaredNorm();
      const double ref = *std::max_element(recent.begin(), recent.end());
      B_prev = B_;
      grad_prev = grad;
      bool moved = false;
      for (int bt = 0; bt < 60; ++bt) {
        const Eigen::MatrixXd cand = B_prev - step * grad_prev;
        const double cand_loss = eval(cand, nullptr);
        if (cand_loss <= ref - 1e-4 * step * g2) {
          B_ = cand;
          loss = eval(B_, &grad);
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
      recent.push_back(loss);
      if (recent.size() > 10) recent.erase(recent.begin());
    }
    if (grad.lpNorm<Eigen::Infinity>() > 1e-5) {
      warnings_.push_back("multinomial_softmax: loose convergence");
    }
  }

  const Eigen::MatrixXd& params() const { return B_; }

  Eigen::VectorXd predict(const Eigen::MatrixXd&) const override {
    throw ContractError("pmf learner has no scalar prediction");
  }

  Eigen::MatrixXd predict_pmf(const Eigen::MatrixXd& X) const override {
    check_dim(X);
    const int n = static_cast<int>(X.rows());
    Eigen::MatrixXd Z(n, p_ + 1);
    Z.col(0).setOnes();
    for (int j = 0; j < p_; ++j) Z.col(j + 1) = (X.col(j).array() - mean_(j)) / sd_(j);
    Eigen::MatrixXd P(n, K_);
    if (K_ == 1) {
      P.setOnes();
      return P;
    }
    Eigen::MatrixXd logits = Z * B_;
    for (int i = 0; i < n; ++i) {
      double mx = 0.0;
      for (int k = 0; k + 1 < K_; ++k) mx = std::max(mx, logits(i, k));
      double denom = std::exp(-mx);
      for (int k = 0; k + 1 < K_; ++k) denom += std::exp(logits(i, k) - mx);
      P(i, 0) = std::exp(-mx) / denom;
      for (int k = 1; k < K_; ++k) P(i, k) = std::exp(logits(i, k - 1) - mx) / denom;
    }
    apply_pmf_floor(P);
    return P;
  }

  int feature_dim() const override { return p_; }
  int output_arity() const override { return K_; }
  std::string kind_name() const override { return "multinomial_softmax"; }

 private:
  Eigen::MatrixXd B_;
  Eigen::VectorXd mean_, sd_;
  int p_ = 0, K_ = 0;
};

// ---------------------------------------------------------------------------
// Gradient-boosted depth-1 regression trees, squared loss. No subsampling, so
// fits are deterministic; ties prefer the lowest feature index and threshold.
// ---------------------------------------------------------------------------

struct Stump {
  int feature = -1;
  double threshold = 0.0;
  double left = 0.0;   // x <= threshold
  double right = 0.0;  // x > threshold
};

class BoostedStumpsLearner final : public FittedLearner {
 public:
  BoostedStumpsLearner(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, int rounds, double rate,
                       double min_leaf_weight) {
    const int n = static_cast<int>(X.rows());
    const int p = static_cast<int>(X.cols());
    p_ = p;
    const double W = std::max(w.sum(), 1e-300);
    base_ = w.dot(y) / W;
    rate_ = rate;

    // Presort feature columns once.
    std::vector<std::vector<int>> order(p);
    for (int j = 0; j < p; ++j) {
      order[j].resize(n);
      std::iota(order[j].begin(), order[j].end(), 0);
      const auto& col = X.col(j);
      std::stable_sort(order[j].begin(), order[j].end(),
                       [&](int a, int b) { return col(a) < col(b); });
    }

    Eigen::VectorXd resid = y.array() - base_;
    stumps_.reserve(rounds);
    for (int m = 0; m < rounds; ++m) {
      double best_gain = 1e-12;
      Stump best;
      for (int j = 0; j < p; ++j) {
        const auto& ord = order[j];
        const auto& col = X.col(j);
        double wl = 0.0, wrl = 0.0;
        const double wt = W;
        double wrt = 0.0;
        for (int i = 0; i < n; ++i) wrt += w(i) * resid(i);
        for (int pos = 0; pos + 1 < n; ++pos) {
          const int i = ord[pos];
          wl += w(i);
          wrl += w(i) * resid(i);
          const double x_here = col(i);
          const double x_next = col(ord[pos + 1]);
          if (x_next <= x_here) continue;  // no split between equal values
          const double wr = wt - wl;
          if (wl < min_leaf_weight || wr < min_leaf_weight) continue;
          const double gain = wrl * wrl / wl + (wrt - wrl) * (wrt - wrl) / wr;
          if (gain > best_gain + 1e-15) {
            best_gain = gain;
            best.feature = j;
            best.threshold = 0.5 * (x_here + x_next);
            best.left = wrl / wl;
            best.right = (wrt - wrl) / wr;
          }
        }
      }
      if (best.feature < 0) break;  // nothing left to split on
      stumps_.push_back(best);
      for (int i = 0; i < n; ++i) {
        const double v = X(i, best.feature) <= best.threshold ? best.left : best.right;
        resid(i) -= rate_ * v;
      }
    }
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override {
    check_dim(X);
    Eigen::VectorXd out = Eigen::VectorXd::Constant(X.rows(), base_);
    for (const auto& s : stumps_) {
      for (int i = 0; i < X.rows(); ++i) {
        out(i) += rate_ * (X(i, s.feature) <= s.threshold ? s.left : s.right);
      }
    }
    return out;
  }
  int feature_dim() const override { return p_; }
  std::string kind_name() const override { return "boosted_stumps"; }

 private:
  std::vector<Stump> stumps_;
  double base_ = 0.0, rate_ = 0.1;
  int p_ = 0;
};

// ---------------------------------------------------------------------------
// k-nearest neighbours on standardized features. Distance ties are broken by
// training row index so predictions are deterministic.
// ---------------------------------------------------------------------------

class KnnLearner final : public FittedLearner {
 public:
  KnnLearner(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
             const std::vector<int>* labels, int K_classes,
             const Eigen::VectorXd& w, int k)
      : y_(y), w_(w), k_(std::min<int>(k, static_cast<int>(X.rows()))) {
    p_ = static_cast<int>(X.cols());
    K_ = K_classes;
    if (labels) labels_ = *labels;
    mean_ = X.colwise().mean();
    sd_.resize(p_);
    for (int j = 0; j < p_; ++j) {
      const double var = (X.col(j).array() - mean_(j)).square().sum() /
                         std::max<int>(1, static_cast<int>(X.rows()));
      sd_(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    Z_.resize(X.rows(), p_);
    for (int j = 0; j < p_; ++j) Z_.col(j) = (X.col(j).array() - mean_(j)) / sd_(j);
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override {
    check_dim(X);
    Eigen::VectorXd out(X.rows());
    std::vector<std::pair<double, int>> dist(Z_.rows());
    for (int q = 0; q < X.rows(); ++q) {
      neighbour_distances(X, q, dist);
      std::nth_element(dist.begin(), dist.begin() + (k_ - 1), dist.end());
      double sw = 0.0, swy = 0.0;
      for (int r = 0; r < k_; ++r) {
        const int i = dist[r].second;
        sw += w_(i);
        swy += w_(i) * y_(i);
      }
      out(q) = sw > 0 ? swy / sw : y_.mean();
    }
    return out;
  }

  Eigen::MatrixXd predict_pmf(const Eigen::MatrixXd& X) const override {
    check_dim(X);
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(X.rows(), K_);
    std::vector<std::pair<double, int>> dist(Z_.rows());
    for (int q = 0; q < X.rows(); ++q) {
      neighbour_distances(X, q, dist);
      std::nth_element(dist.begin(), dist.begin() + (k_ - 1), dist.end());
      double sw = 0.0;
      for (int r = 0; r < k_; ++r) {
        const int i = dist[r].second;
        P(q, labels_[i]) += w_(i);
        sw += w_(i);
      }
      if (sw > 0) {
        P.row(q) /= sw;
      } else {
        P.row(q).setConstant(1.0 / K_);
      }
    }
    apply_pmf_floor(P);
    return P;
  }

  int feature_dim() const override { return p_; }
  int output_arity() const override { return K_ > 0 ? K_ : 1; }
  std::string kind_name() const override { return "knn"; }

 private:
  void neighbour_distances(const Eigen::MatrixXd& X, int q,
                           std::vector<std::pair<double, int>>& dist) const {
    Eigen::VectorXd z(p_);
    for (int j = 0; j < p_; ++j) z(j) = (X(q, j) - mean_(j)) / sd_(j);
    for (int i = 0; i < Z_.rows(); ++i) {
      dist[i] = {(Z_.row(i).transpose() - z).squaredNorm(), i};
    }
  }

  Eigen::MatrixXd Z_;
  Eigen::VectorXd y_, w_, mean_, sd_;
  std::vector<int> labels_;
  int p_ = 0, K_ = 0, k_ = 1;
};

int default_knn_k(const LearnerSpec& spec, int n) {
  const double k = spec.hp("k", -1.0);
  if (k >= 1.0) return static_cast<int>(k);
  return std::max(10, static_cast<int>(std::floor(std::pow(n, 0.4))));
}

}  // namespace

FittedPtr fit_regression(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                         const Eigen::VectorXd& y, const Eigen::VectorXd& w_in) {
  check_inputs(X, y);
  const int n = static_cast<int>(X.rows());
  const Eigen::VectorXd w = resolve_weights(w_in, n);
  switch (spec.kind) {
    case LearnerKind::Mean: {
      const double W = std::max(w.sum(), 1e-300);
      return std::make_shared<MeanLearner>(w.dot(y) / W,
                                           static_cast<int>(X.cols()));
    }
    case LearnerKind::CellMean:
      return std::make_shared<CellMeanLearner>(X, y, w);
    case LearnerKind::LinearRidge:
      return std::make_shared<LinearRidgeLearner>(X, y, w,
                                                  spec.hp("lambda", 1e-4 * n));
    case LearnerKind::LogisticRidge:
      return std::make_shared<LogisticRidgeLearner>(
          X, y, w, spec.hp("lambda", 1e-4 * n));
    case LearnerKind::BoostedStumps:
      return std::make_shared<BoostedStumpsLearner>(
          X, y, w, static_cast<int>(spec.hp("rounds", 200)),
          spec.hp("learning_rate", 0.1), spec.hp("min_leaf", 5.0));
    case LearnerKind::Knn:
      return std::make_shared<KnnLearner>(X, y, nullptr, 0, w,
                                          default_knn_k(spec, n));
    case LearnerKind::Stack:
      throw ContractError("stack specs must be fitted through cv_select");
    default:
      throw ContractError("learner '" + learner_kind_name(spec.kind) +
                          "' does not support regression");
  }
}

FittedPtr fit_pmf(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                  const std::vector<int>& labels, int n_classes,
                  const Eigen::VectorXd& w_in) {
  if (static_cast<int>(labels.size()) != X.rows()) {
    throw ContractError("labels length != n");
  }
  if (!X.allFinite()) throw ContractError("non-finite feature value");
  if (n_classes < 1) throw ContractError("need n_classes >= 1");
  for (int a : labels) {
    if (a < 0 || a >= n_classes) {
      throw ContractError("class label " + std::to_string(a) +
                          " outside {0,...," + std::to_string(n_classes - 1) + "}");
    }
  }
  const int n = static_cast<int>(X.rows());
  const Eigen::VectorXd w = resolve_weights(w_in, n);
  switch (spec.kind) {
    case LearnerKind::Mean: {
      Eigen::VectorXd freq = Eigen::VectorXd::Zero(n_classes);
      for (int i = 0; i < n; ++i) freq(labels[i]) += w(i);
      freq /= std::max(freq.sum(), 1e-300);
      return std::make_shared<MeanPmfLearner>(std::move(freq),
                                              static_cast<int>(X.cols()));
    }
    case LearnerKind::CellMean:
      return std::make_shared<CellMeanPmfLearner>(X, labels, n_classes, w);
    case LearnerKind::MultinomialSoftmax:
      return std::make_shared<SoftmaxLearner>(X, labels, n_classes, w,
                                              spec.hp("lambda", 1e-3 * n));
    case LearnerKind::Knn: {
      Eigen::VectorXd dummy = Eigen::VectorXd::Zero(n);
      return std::make_shared<KnnLearner>(X, dummy, &labels, n_classes, w,
                                          default_knn_k(spec, n));
    }
    case LearnerKind::Stack:
      throw ContractError("stack specs must be fitted through cv_select_pmf");
    default:
      throw ContractError("learner '" + learner_kind_name(spec.kind) +
                          "' does not support pmf estimation");
  }
}

namespace {

double pmf_log_loss(const Eigen::MatrixXd& P, const std::vector<int>& labels,
                    const std::vector<int>& rows) {
  double total = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    total -= std::log(std::max(P(static_cast<int>(r), labels[rows[r]]), kPmfFloor));
  }
  return total;
}

}  // namespace

FittedPtr cv_select(const std::vector<LearnerSpec>& stack,
                    const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    int folds, CvLoss loss, std::uint64_t seed,
                    CvSelection* info) {
  if (stack.empty()) throw ContractError("cv_select: empty stack");
  const int n = static_cast<int>(X.rows());
  if (stack.size() == 1 || n < 2 * folds) {
    if (info) {
      info->chosen = 0;
      info->cv_losses.assign(stack.size(), 0.0);
    }
    return fit_regression(stack[0], X, y);
  }
  const FoldAssignment fa = make_folds(n, folds, seed);
  std::vector<double> losses(stack.size(), 0.0);
  for (std::size_t c = 0; c < stack.size(); ++c) {
    double total = 0.0;
    for (int j = 0; j < folds; ++j) {
      const auto train = training_rows(fa, j);
      const auto valid = fa.fold_rows(j);
      Eigen::MatrixXd Xtr(train.size(), X.cols()), Xva(valid.size(), X.cols());
      Eigen::VectorXd ytr(train.size());
      for (std::size_t r = 0; r < train.size(); ++r) {
        Xtr.row(static_cast<int>(r)) = X.row(train[r]);
        ytr(static_cast<int>(r)) = y(train[r]);
      }
      for (std::size_t r = 0; r < valid.size(); ++r) {
        Xva.row(static_cast<int>(r)) = X.row(valid[r]);
      }
      const auto fit = fit_regression(stack[c], Xtr, ytr);
      const Eigen::VectorXd pred = fit->predict(Xva);
      for (std::size_t r = 0; r < valid.size(); ++r) {
        const double yv = y(valid[r]);
        const double pv = pred(static_cast<int>(r));
        if (loss == CvLoss::Squared) {
          total += (yv - pv) * (yv - pv);
        } else {
          const double pc = std::clamp(pv, kProbClip, 1.0 - kProbClip);
          total += -yv * std::log(pc) - (1.0 - yv) * std::log(1.0 - pc);
        }
      }
    }
    losses[c] = total / n;
  }
  int best = 0;
  for (std::size_t c = 1; c < stack.size(); ++c) {
    if (losses[c] < losses[best]) best = static_cast<int>(c);
  }
  if (info) {
    info->chosen = best;
    info->cv_losses = losses;
  }
  return fit_regression(stack[best], X, y);
}

FittedPtr cv_select_pmf(const std::vector<LearnerSpec>& stack,
                        const Eigen::MatrixXd& X, const std::vector<int>& labels,
                        int n_classes, int folds, std::uint64_t seed,
                        CvSelection* info) {
  if (stack.empty()) throw ContractError("cv_select: empty stack");
  const int n = static_cast<int>(X.rows());
  if (stack.size() == 1 || n < 2 * folds) {
    if (info) {
      info->chosen = 0;
      info->cv_losses.assign(stack.size(), 0.0);
    }
    return fit_pmf(stack[0], X, labels, n_classes);
  }
  const FoldAssignment fa = make_folds(n, folds, seed);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  std::vector<double> losses(stack.size(), 0.0);
  // Full-data refits, computed up front so softmax fold fits can warm-start
  // from them and the winning refit is free.
  std::vector<FittedPtr> full_fits(stack.size());
  for (std::size_t c = 0; c < stack.size(); ++c) {
    full_fits[c] = fit_pmf(stack[c], X, labels, n_classes);
    const auto* warm =
        dynamic_cast<const SoftmaxLearner*>(full_fits[c].get());
    double total = 0.0;
    for (int j = 0; j < folds; ++j) {
      const auto train = training_rows(fa, j);
      const auto valid = fa.fold_rows(j);
      Eigen::MatrixXd Xtr(train.size(), X.cols()), Xva(valid.size(), X.cols());
      std::vector<int> ltr(train.size());
      for (std::size_t r = 0; r < train.size(); ++r) {
        Xtr.row(static_cast<int>(r)) = X.row(train[r]);
        ltr[r] = labels[train[r]];
      }
      for (std::size_t r = 0; r < valid.size(); ++r) {
        Xva.row(static_cast<int>(r)) = X.row(valid[r]);
      }
      FittedPtr fit;
      if (warm != nullptr) {
        Eigen::VectorXd wtr = Eigen::VectorXd::Ones(train.size());
        fit = std::make_shared<SoftmaxLearner>(
            Xtr, ltr, n_classes, wtr,
            stack[c].hp("lambda", 1e-3 * train.size()), warm);
      } else {
        fit = fit_pmf(stack[c], Xtr, ltr, n_classes);
      }
      total += pmf_log_loss(fit->predict_pmf(Xva), labels, valid);
    }
    losses[c] = total / n;
  }
  int best = 0;
  for (std::size_t c = 1; c < stack.size(); ++c) {
    if (losses[c] < losses[best]) best = static_cast<int>(c);
  }
  if (info) {
    info->chosen = best;
    info->cv_losses = losses;
  }
  return full_fits[best];
}

FittedPtr fit_regression_auto(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y, CvSelection* info) {
  if (spec.kind == LearnerKind::Stack) {
    return cv_select(spec.stack, X, y, spec.stack_folds, CvLoss::Squared,
                     spec.seed, info);
  }
  return fit_regression(spec, X, y);
}

FittedPtr fit_pmf_auto(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                       const std::vector<int>& labels, int n_classes,
                       CvSelection* info) {
  if (spec.kind == LearnerKind::Stack) {
    return cv_select_pmf(spec.stack, X, labels, n_classes, spec.stack_folds,
                         spec.seed, info);
  }
  return fit_pmf(spec, X, labels, n_classes);
}

}  // namespace msmkit
