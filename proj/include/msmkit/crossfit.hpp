#pragma once

#include <cstdint>
#include <vector>

#include "msmkit/common.hpp"

namespace msmkit {

// Random partition of {0,...,n-1} into J prediction folds of sizes differing
// by at most one. Deterministic given (n, J, seed).
struct FoldAssignment {
  int n = 0;
  int J = 0;
  std::uint64_t seed = 0;
  std::vector<int> fold_of;  // row -> fold id in [0, J)

  std::vector<int> fold_rows(int j) const;
  bool is_degenerate() const { return J == 1; }
};

// Shuffled round-robin partition; requires 2 <= J <= n.
FoldAssignment make_folds(int n, int J, std::uint64_t seed);

// Degenerate no-split assignment: one fold whose training set equals the
// prediction set (all rows). For diagnostics and exactness tests only;
// cross-fitted inference is not valid under it.
FoldAssignment single_fold(int n);

// Complement of fold j; for the degenerate assignment this is all rows.
std::vector<int> training_rows(const FoldAssignment& fa, int j);

}  // namespace msmkit
