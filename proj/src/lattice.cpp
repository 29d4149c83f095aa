#include "msmkit/lattice.hpp"

#include <map>

namespace msmkit {

namespace {

long exact_path_count(const TreatmentSupport& support, long cap) {
  long count = 1;
  for (int t = 1; t <= support.tau(); ++t) {
    count *= support.n_levels(t);
    if (count > cap) return -1;
  }
  return count;
}

Eigen::MatrixXi enumerate_paths(const TreatmentSupport& support, long count) {
  const int tau = support.tau();
  Eigen::MatrixXi paths(count, tau);
  std::vector<int> idx(tau, 0);
  for (long p = 0; p < count; ++p) {
    for (int t = 0; t < tau; ++t) paths(p, t) = support.levels[t][idx[t]];
    for (int t = tau - 1; t >= 0; --t) {
      if (++idx[t] < support.n_levels(t + 1)) break;
      idx[t] = 0;
    }
  }
  return paths;
}

Eigen::VectorXd exact_weights(const TreatmentSupport& support,
                              const ReferenceMeasure& lam,
                              const Eigen::MatrixXi& paths,
                              const Eigen::VectorXd& v) {
  const int tau = support.tau();
  Eigen::VectorXd w(paths.rows());
  std::vector<int> abar_prev;
  for (long p = 0; p < paths.rows(); ++p) {
    abar_prev.clear();
    double weight = 1.0;
    for (int t = 1; t <= tau; ++t) {
      const Eigen::VectorXd pmf = lam.pmf(t, abar_prev, v);
      weight *= pmf(support.level_index(t, paths(p, t - 1)));
      abar_prev.push_back(paths(p, t - 1));
    }
    w(p) = weight;
  }
  return w;
}

Eigen::MatrixXi sample_paths(const TreatmentSupport& support,
                             const ReferenceMeasure& lam,
                             const Eigen::VectorXd& v, long draws, Rng& rng) {
  const int tau = support.tau();
  Eigen::MatrixXi paths(draws, tau);
  std::vector<int> abar_prev;
  std::vector<double> probs;
  for (long p = 0; p < draws; ++p) {
    abar_prev.clear();
    for (int t = 1; t <= tau; ++t) {
      const Eigen::VectorXd pmf = lam.pmf(t, abar_prev, v);
      probs.assign(pmf.data(), pmf.data() + pmf.size());
      const int idx = rng.categorical(probs);
      paths(p, t - 1) = support.levels[t - 1][idx];
      abar_prev.push_back(paths(p, t - 1));
    }
  }
  return paths;
}

SequenceLattice build_impl(
    const TreatmentSupport& support, const ReferenceMeasure& lam,
    const std::vector<std::pair<Eigen::VectorXd, double>>& atoms,
    LatticeMode mode, long mc_draws, std::uint64_t seed, long cap) {
  SequenceLattice lattice;
  lattice.mode = mode;
  if (mode == LatticeMode::Exact) {
    const long count = exact_path_count(support, cap);
    if (count < 0) {
      throw ContractError(
          "exact lattice would exceed the path cap of " + std::to_string(cap) +
          "; use Monte Carlo mode (mode=mc) instead");
    }
    lattice.exact_paths = enumerate_paths(support, count);
  }
  Rng rng(derive_seed(seed, 0x6c617474ULL));  // "latt" stream
  for (const auto& [v, mass] : atoms) {
    SequenceLattice::Group g;
    g.v = v;
    g.mass = mass;
    if (mode == LatticeMode::Exact) {
      g.weights = exact_weights(support, lam, lattice.exact_paths, v);
    } else {
      if (mc_draws < 1) throw ContractError("mc lattice: need mc_draws >= 1");
      g.mc_paths = sample_paths(support, lam, v, mc_draws, rng);
      g.weights = Eigen::VectorXd::Constant(mc_draws, 1.0 / static_cast<double>(mc_draws));
    }
    lattice.groups.push_back(std::move(g));
  }
  return lattice;
}

}  // namespace

SequenceLattice build_lattice(const TreatmentSupport& support,
                              const ReferenceMeasure& lam,
                              const TrajectoryDataset& ds, LatticeMode mode,
                              long mc_draws, std::uint64_t seed, long cap) {
  // Group units by distinct baseline value; masses are empirical frequencies.
  std::map<std::vector<double>, long> counts;
  for (int i = 0; i < ds.n(); ++i) {
    const Eigen::VectorXd v = ds.baseline(i);
    std::vector<double> key(v.data(), v.data() + v.size());
    ++counts[key];
  }
  std::vector<std::pair<Eigen::VectorXd, double>> atoms;
  atoms.reserve(counts.size());
  for (const auto& [key, count] : counts) {
    Eigen::VectorXd v(key.size());
    for (std::size_t j = 0; j < key.size(); ++j) v(static_cast<int>(j)) = key[j];
    atoms.emplace_back(std::move(v),
                       static_cast<double>(count) / static_cast<double>(ds.n()));
  }
  return build_impl(support, lam, atoms, mode, mc_draws, seed, cap);
}

SequenceLattice build_lattice_for_atoms(
    const TreatmentSupport& support, const ReferenceMeasure& lam,
    const std::vector<std::pair<Eigen::VectorXd, double>>& atoms,
    LatticeMode mode, long mc_draws, std::uint64_t seed, long cap) {
  double total = 0.0;
  for (const auto& a : atoms) total += a.second;
  if (std::abs(total - 1.0) > 1e-8) {
    throw ContractError("lattice atoms: masses must sum to 1");
  }
  return build_impl(support, lam, atoms, mode, mc_draws, seed, cap);
}

}  // namespace msmkit
