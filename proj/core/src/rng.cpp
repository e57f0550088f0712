#include "vsgg/rng.hpp"

#include <cmath>

#include "vsgg/errors.hpp"

namespace vsgg {

namespace {

// splitmix64 finalizer; also used as the seed mixer.
uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(uint64_t seed) : state_(mix64(seed ^ 0x7a5c1d3fb2e49a61ULL)) {}

uint64_t Rng::next_u64() {
  state_ += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  if (hi < lo) throw ContractError("uniform_int: hi < lo");
  uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  return lo + static_cast<int64_t>(next_u64() % span);
}

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

double Rng::normal(double mean, double stddev) {
  return mean + stddev * normal();
}

bool Rng::chance(double p) { return uniform() < p; }

std::vector<double> Rng::zipf_cdf(int64_t n, double exponent) {
  if (n <= 0) throw ContractError("zipf_cdf: n must be positive");
  if (exponent <= 0.0) throw ContractError("zipf_cdf: exponent must be > 0");
  std::vector<double> cdf(static_cast<size_t>(n));
  double total = 0.0;
  for (int64_t r = 0; r < n; ++r) {
    total += std::pow(static_cast<double>(r + 1), -exponent);
    cdf[static_cast<size_t>(r)] = total;
  }
  for (auto& c : cdf) c /= total;
  cdf.back() = 1.0;
  return cdf;
}

int64_t Rng::zipf(const std::vector<double>& cdf) {
  double u = uniform();
  // cdf is short (class counts); linear scan keeps this exact and simple.
  for (size_t r = 0; r < cdf.size(); ++r) {
    if (u < cdf[r]) return static_cast<int64_t>(r);
  }
  return static_cast<int64_t>(cdf.size()) - 1;
}

uint64_t derive_seed(uint64_t root, std::string_view tag) {
  // FNV-1a over the tag, then mixed with the root.
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return mix64(root ^ mix64(h));
}

uint64_t derive_seed(uint64_t root, std::string_view tag, uint64_t a,
                     uint64_t b) {
  uint64_t h = derive_seed(root, tag);
  return mix64(h ^ mix64(a ^ 0x5851f42d4c957f2dULL) ^ mix64(b + 0x14057b7ef767814fULL));
}

}  // namespace vsgg
