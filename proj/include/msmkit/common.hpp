#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace msmkit {

inline constexpr const char* kToolVersion = "msmkit 0.1.0";

// ---------------------------------------------------------------------------
// Error hierarchy. Contract violations, bad input files, and solver failures
// are reported through these so callers (and the CLI) can map them to exit
// codes deterministically.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct SchemaError : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct ContractError : Error {
  using Error::Error;
};

struct SolverError : Error {
  explicit SolverError(const std::string& msg, double residual = 0.0,
                       int iterations = 0)
      : Error(msg), final_residual(residual), iterations(iterations) {}
  double final_residual;
  int iterations;
};

struct InferenceError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. All randomness in the library flows through Rng so that
// results are reproducible for a given master seed regardless of platform
// stdlib distribution implementations. Draws are derived from raw mt19937_64
// output only.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Rejection-free multiply-shift; bias is
  // negligible for the n used here (n << 2^32).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) %
           n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Index draw from an unnormalized weight vector.
  int categorical(const std::vector<double>& w) {
    double total = 0.0;
    for (double v : w) total += v;
    double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < w.size(); ++k) {
      acc += w[k];
      if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(w.size()) - 1;
  }

  double normal() {
    // Box-Muller; one value per call keeps the stream simple to reason about.
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  }

  // Fisher-Yates permutation of {0,...,n-1}.
  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i) {
      int j = static_cast<int>(below(static_cast<std::uint64_t>(i) + 1));
      std::swap(p[i], p[j]);
    }
    return p;
  }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Seed splitting. Child streams are derived from (master, tags) with a
// splitmix64 chain so that e.g. replicate s of sample size n always sees the
// same stream no matter the execution order or thread count.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = splitmix64(master ^ 0x6d73ULL);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  s = splitmix64(s ^ c);
  return s;
}

// FNV-1a, used to fingerprint configurations in output files and fixtures.
inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v);

// Kahan-compensated mean; used where column-mean cancellation guarantees are
// asserted at 1e-10 scale.
double stable_mean(const std::vector<double>& xs);

}  // namespace msmkit
