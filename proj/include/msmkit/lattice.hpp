#pragma once

#include <Eigen/Dense>
#include <vector>

#include "msmkit/reference_measure.hpp"
#include "msmkit/working_model.hpp"

namespace msmkit {

inline constexpr long kDefaultLatticeCap = 1000000;

enum class LatticeMode { Exact, MonteCarlo };

// Realization of the integral against Lambda(abar, v): treatment paths with
// Lambda weights, grouped by distinct baseline value V. The v-marginal is the
// empirical one, so group masses sum to 1.
struct SequenceLattice {
  LatticeMode mode = LatticeMode::Exact;
  Eigen::MatrixXi exact_paths;  // shared path enumeration (exact mode)

  struct Group {
    Eigen::VectorXd v;
    double mass = 0.0;
    Eigen::VectorXd weights;    // per path; exact: Lambda probs, mc: 1/draws
    Eigen::MatrixXi mc_paths;   // per-group sampled paths (mc mode)
  };
  std::vector<Group> groups;

  long n_paths(const Group& g) const {
    return mode == LatticeMode::Exact ? exact_paths.rows() : g.mc_paths.rows();
  }
  const Eigen::MatrixXi& paths(const Group& g) const {
    return mode == LatticeMode::Exact ? exact_paths : g.mc_paths;
  }
};

SequenceLattice build_lattice(const TreatmentSupport& support,
                              const ReferenceMeasure& lam,
                              const TrajectoryDataset& ds, LatticeMode mode,
                              long mc_draws = 10000, std::uint64_t seed = 0,
                              long cap = kDefaultLatticeCap);

// Builds a lattice from explicit (v, mass) atoms instead of a dataset; used
// by the large-sample truth utilities.
SequenceLattice build_lattice_for_atoms(
    const TreatmentSupport& support, const ReferenceMeasure& lam,
    const std::vector<std::pair<Eigen::VectorXd, double>>& atoms,
    LatticeMode mode, long mc_draws = 10000, std::uint64_t seed = 0,
    long cap = kDefaultLatticeCap);

}  // namespace msmkit
