#pragma once

// Ground-truth matchers and a Monte-Carlo acceptance estimator. These are
// naive scans on purpose and share nothing with the protocol code beyond the
// core predicates.

#include <cmath>
#include <functional>

#include "core_types.hpp"

namespace pmatch {

inline std::vector<std::uint32_t> brute_force_pm(const Dataset& ds, const TernaryPattern& y) {
  require(y.dim() == ds.dim(), "query dimension mismatch");
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < ds.size(); ++i)
    if (match_pm(ds[i], y)) out.push_back(i);
  return out;
}

inline std::vector<std::uint32_t> brute_force_sq(const Dataset& ds, const BitVector& y) {
  require(y.dim() == ds.dim(), "query dimension mismatch");
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < ds.size(); ++i)
    if (subset_of(ds[i], y)) out.push_back(i);
  return out;
}

struct Estimate {
  double mean = 0;
  double stderr_ = 0;
  std::uint64_t trials = 0;

  double upper(double sigmas = 3.0) const { return mean + sigmas * stderr_; }
  double lower(double sigmas = 3.0) const { return mean - sigmas * stderr_; }
  bool within(double target, double sigmas = 3.0) const {
    // A zero stderr still allows a single-trial granularity miss.
    const double tol = std::max(sigmas * stderr_, 0.5 / static_cast<double>(trials));
    return std::fabs(mean - target) <= tol;
  }
};

inline Estimate make_estimate(std::uint64_t hits, std::uint64_t trials) {
  require(trials >= 1, "need at least one trial");
  Estimate e;
  e.trials = trials;
  e.mean = static_cast<double>(hits) / static_cast<double>(trials);
  e.stderr_ = std::sqrt(e.mean * (1.0 - e.mean) / static_cast<double>(trials));
  return e;
}

// The closure receives trial k's seed, seed + k·φ, and returns 1 for accept.
inline Estimate accept_rate(const std::function<int(std::uint64_t)>& run, std::uint64_t trials, std::uint64_t seed) {
  require(trials >= 1, "need at least one trial");
  std::uint64_t hits = 0;
  for (std::uint64_t k = 0; k < trials; ++k) hits += run(seed + k * 0x9e3779b97f4a7c15ULL) == 1 ? 1 : 0;
  return make_estimate(hits, trials);
}

}  // namespace pmatch
