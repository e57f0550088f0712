#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace vsgg {

// Deterministic, platform-independent random stream. All randomness in the
// project flows through this generator so that runs are exactly replayable;
// std:: distributions are avoided because their output is
// implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [lo, hi], inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi);
  // Standard normal via Box-Muller (second draw cached).
  double normal();
  double normal(double mean, double stddev);
  // Bernoulli with probability p.
  bool chance(double p);
  // Rank in [0, n) with probability proportional to (rank+1)^(-exponent).
  int64_t zipf(const std::vector<double>& cdf);

  // Cumulative distribution over ranks 0..n-1 for weights (r+1)^(-exponent).
  static std::vector<double> zipf_cdf(int64_t n, double exponent);

 private:
  uint64_t state_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

// Derives an independent child seed from a root seed and a tag. Adding new
// tags never perturbs the streams of existing ones.
uint64_t derive_seed(uint64_t root, std::string_view tag);
uint64_t derive_seed(uint64_t root, std::string_view tag, uint64_t a,
                     uint64_t b = 0);

}  // namespace vsgg
