#include "msmkit/crossfit.hpp"

namespace msmkit {

std::vector<int> FoldAssignment::fold_rows(int j) const {
  std::vector<int> rows;
  for (int i = 0; i < n; ++i) {
    if (fold_of[i] == j) rows.push_back(i);
  }
  return rows;
}

FoldAssignment make_folds(int n, int J, std::uint64_t seed) {
  if (J < 2) throw ContractError("make_folds: need J >= 2");
  if (J > n) throw ContractError("make_folds: J > n");
  FoldAssignment fa;
  fa.n = n;
  fa.J = J;
  fa.seed = seed;
  fa.fold_of.resize(n);
  Rng rng(derive_seed(seed, 0x666f6c64ULL));  // "fold" stream
  const std::vector<int> perm = rng.permutation(n);
  for (int pos = 0; pos < n; ++pos) fa.fold_of[perm[pos]] = pos % J;
  return fa;
}

FoldAssignment single_fold(int n) {
  FoldAssignment fa;
  fa.n = n;
  fa.J = 1;
  fa.fold_of.assign(n, 0);
  return fa;
}

std::vector<int> training_rows(const FoldAssignment& fa, int j) {
  if (j < 0 || j >= fa.J) throw ContractError("training_rows: fold out of range");
  if (fa.J == 1) return fa.fold_rows(0);
  std::vector<int> rows;
  rows.reserve(fa.n - fa.n / fa.J);
  for (int i = 0; i < fa.n; ++i) {
    if (fa.fold_of[i] != j) rows.push_back(i);
  }
  return rows;
}

}  // namespace msmkit
