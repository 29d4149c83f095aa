#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "msmkit/common.hpp"

namespace msmkit {

// Ordered list of integer-coded treatment categories per time point.
struct TreatmentSupport {
  std::vector<std::vector<int>> levels;  // levels[t-1], sorted ascending

  int tau() const { return static_cast<int>(levels.size()); }
  int n_levels(int t) const { return static_cast<int>(levels.at(t - 1).size()); }

  // Index of a code within the support at time t; throws if absent.
  int level_index(int t, int code) const;
  bool contains(int t, int code) const;
  void validate() const;
};

// Column-role mapping for wide-format trajectory files. One covariate block
// per time point; the outcome is a single numeric column.
struct DataSchema {
  int tau = 0;
  std::vector<std::string> treatment_cols;               // size tau
  std::vector<std::vector<std::string>> covariate_cols;  // size tau
  std::string outcome_col;
  // Baseline covariates V: subset of covariate_cols[0]; empty means all of L1.
  std::vector<std::string> baseline_cols;
  // Optional explicit support; inferred from the data when empty.
  std::vector<std::vector<int>> support_levels;

  void validate() const;
};

// One unit's record, materialized row-wise. The dataset stores columns; this
// view exists for call sites that want a single trajectory.
struct Trajectory {
  std::vector<Eigen::VectorXd> covariates;  // L_1..L_tau
  std::vector<int> treatments;              // A_1..A_tau
  double outcome = 0.0;
};

class TrajectoryDataset {
 public:
  TrajectoryDataset(int tau, std::vector<Eigen::MatrixXd> covariates,
                    Eigen::MatrixXi treatments, Eigen::VectorXd outcome,
                    TreatmentSupport support, DataSchema schema);

  int n() const { return static_cast<int>(outcome_.size()); }
  int tau() const { return tau_; }
  const TreatmentSupport& support() const { return support_; }
  const DataSchema& schema() const { return schema_; }

  int treatment(int i, int t) const { return treatments_(i, t - 1); }
  const Eigen::MatrixXi& treatments() const { return treatments_; }

  // Covariate block L_t as an n x dim(L_t) matrix.
  const Eigen::MatrixXd& covariates(int t) const { return covariates_.at(t - 1); }
  int covariate_dim(int t) const {
    return static_cast<int>(covariates_.at(t - 1).cols());
  }

  double outcome(int i) const { return outcome_(i); }
  const Eigen::VectorXd& outcomes() const { return outcome_; }

  // Baseline covariates V for unit i (subset of L_1 per the schema).
  Eigen::VectorXd baseline(int i) const;
  int baseline_dim() const { return static_cast<int>(baseline_idx_.size()); }
  const std::vector<int>& baseline_indices() const { return baseline_idx_; }

  // History vector (A_1,...,A_{t-1}, L_1,...,L_t) for unit i; treatments come
  // first as double-coded levels, then covariate blocks in time order.
  Eigen::VectorXd history(int i, int t) const;
  int history_dim(int t) const;

  Trajectory row(int i) const;

 private:
  int tau_;
  std::vector<Eigen::MatrixXd> covariates_;
  Eigen::MatrixXi treatments_;
  Eigen::VectorXd outcome_;
  TreatmentSupport support_;
  DataSchema schema_;
  std::vector<int> baseline_idx_;
};

TrajectoryDataset load_csv(const std::string& path, const DataSchema& schema);
void write_csv(const TrajectoryDataset& ds, const std::string& path);

// Assembles a dataset from in-memory columns (simulation and tests).
TrajectoryDataset make_dataset(int tau, std::vector<Eigen::MatrixXd> covariates,
                               Eigen::MatrixXi treatments,
                               Eigen::VectorXd outcome,
                               std::vector<std::vector<int>> support_levels = {});

}  // namespace msmkit
