#pragma once

// Instance generators for tests and benchmarks.

#include <random>

#include "oracle.hpp"

namespace pmatch {

struct Instance {
  std::string kind;
  std::uint64_t seed = 0;
  Dataset dataset;
  std::vector<TernaryPattern> pm_queries;
  std::vector<BitVector> sq_queries;
  // Expected match set per query, from the brute-force oracle.
  std::vector<std::vector<std::uint32_t>> truth;
  // Index of the point each planted query was built from.
  std::vector<std::uint32_t> planted;
};

class InstanceRng {
 public:
  explicit InstanceRng(std::uint64_t seed) : g_(seed) {}
  double unit() { return static_cast<double>(g_() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return unit() < p; }
  std::uint64_t below(std::uint64_t n) {
    // Rejection keeps the draw exactly uniform.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do v = g_(); while (v >= limit);
    return v % n;
  }
  BitVector bernoulli_vector(std::size_t d, double p) {
    BitVector v(d);
    for (std::size_t k = 0; k < d; ++k)
      if (bernoulli(p)) v.set(k);
    return v;
  }
  // k distinct coordinates out of d.
  std::vector<std::size_t> choose(std::size_t d, std::size_t k) {
    std::vector<std::size_t> idx(d);
    for (std::size_t i = 0; i < d; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + below(d - i)]);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
  }

 private:
  std::mt19937_64 g_;
};

inline Dataset gen_uniform(std::size_t n, std::size_t d, double density, std::uint64_t seed) {
  InstanceRng rng(seed);
  Dataset ds(d);
  for (std::size_t i = 0; i < n; ++i) ds.push_back(rng.bernoulli_vector(d, density));
  return ds;
}

// Pattern with exactly `stars` wildcards and uniform values elsewhere.
inline TernaryPattern random_pattern(InstanceRng& rng, std::size_t d, std::size_t stars) {
  TernaryPattern y = TernaryPattern::exact(rng.bernoulli_vector(d, 0.5));
  for (auto k : rng.choose(d, stars)) y.set(k, Symbol::STAR);
  return y;
}

inline Instance gen_planted(std::size_t n, std::size_t d, std::size_t w, std::size_t n_queries, std::uint64_t seed,
                            double density = 0.5) {
  require(w <= d, "need w <= d");
  require(n >= 1, "need n >= 1");
  InstanceRng rng(seed);
  Instance ins;
  ins.kind = "planted";
  ins.seed = seed;
  ins.dataset = Dataset(d);
  for (std::size_t i = 0; i < n; ++i) ins.dataset.push_back(rng.bernoulli_vector(d, density));
  for (std::size_t q = 0; q < n_queries; ++q) {
    const auto src = static_cast<std::uint32_t>(rng.below(n));
    TernaryPattern y = TernaryPattern::exact(ins.dataset[src]);
    for (auto k : rng.choose(d, w)) y.set(k, Symbol::STAR);
    ins.truth.push_back(brute_force_pm(ins.dataset, y));
    require(std::binary_search(ins.truth.back().begin(), ins.truth.back().end(), src), "planted match missing");
    ins.planted.push_back(src);
    ins.pm_queries.push_back(std::move(y));
  }
  return ins;
}

// Random subset-query instance: one special point x' inside y among n-1
// Bernoulli(w_u) points. The special point is stored last.
inline Instance gen_random_sq(std::size_t n, std::size_t d, double w_u, double w_q, std::uint64_t seed) {
  require(0 < w_u && w_u <= w_q && w_q < 1, "need 0 < w_u <= w_q < 1");
  require(n >= 1, "need n >= 1");
  InstanceRng rng(seed);
  Instance ins;
  ins.kind = "random-sq";
  ins.seed = seed;
  ins.dataset = Dataset(d);
  BitVector y = rng.bernoulli_vector(d, w_q);
  for (std::size_t i = 0; i + 1 < n; ++i) ins.dataset.push_back(rng.bernoulli_vector(d, w_u));
  BitVector special(d);
  const double cond = w_u / w_q;
  y.for_each_one([&](std::size_t k) {
    if (rng.bernoulli(cond)) special.set(k);
  });
  ins.dataset.push_back(std::move(special));
  ins.planted.push_back(static_cast<std::uint32_t>(n - 1));
  ins.truth.push_back(brute_force_sq(ins.dataset, y));
  ins.sq_queries.push_back(std::move(y));
  return ins;
}

inline void save_instance(const Instance& ins, const std::string& data_path, const std::string& query_path) {
  ins.dataset.save(data_path);
  if (!ins.pm_queries.empty()) save_queries(query_path, ins.pm_queries);
  else {
    // Subset queries are written as star-free patterns.
    std::vector<TernaryPattern> qs;
    for (const auto& y : ins.sq_queries) qs.push_back(TernaryPattern::exact(y));
    save_queries(query_path, qs);
  }
}

}  // namespace pmatch
