#pragma once

// Length-lexicographic ranking of small subsets.
//
// Subsets of an n-element ground set with at most zmax elements are ordered
// by size first, then lexicographically as increasing index tuples. The
// empty set has rank 0.

#include <optional>
#include <vector>

#include "core_types.hpp"

namespace pmatch {

using u128 = unsigned __int128;

inline constexpr u128 kU128Max = ~static_cast<u128>(0);

namespace detail {

inline u128 sat_add(u128 a, u128 b) { return a > kU128Max - b ? kU128Max : a + b; }

struct BinomTable {
  static constexpr std::size_t kN = 1100, kK = 130;
  std::vector<u128> v;
  BinomTable() : v(kN * kK, 0) {
    for (std::size_t n = 0; n < kN; ++n) {
      v[n * kK] = 1;
      for (std::size_t k = 1; k < kK && k <= n; ++k) v[n * kK + k] = sat_add(v[(n - 1) * kK + k - 1], v[(n - 1) * kK + k]);
    }
  }
};

}  // namespace detail

// C(n, k), saturating at kU128Max.
inline u128 binom(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  if (k > n - k) k = n - k;
  static const detail::BinomTable table;
  if (n < detail::BinomTable::kN && k < detail::BinomTable::kK) return table.v[n * detail::BinomTable::kK + k];
  u128 r = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    const u128 num = n - k + i;
    if (r > kU128Max / num) return kU128Max;
    r = r * num / i;
  }
  return r;
}

// Number of subsets of an n-set of size at most zmax.
inline u128 subset_count(std::size_t n, std::size_t zmax) {
  u128 total = 0;
  for (std::size_t k = 0; k <= std::min(n, zmax); ++k) total = detail::sat_add(total, binom(n, k));
  return total;
}

inline u128 checked(u128 v) {
  if (v == kU128Max) throw usage_error("subset rank overflow");
  return v;
}

inline u128 rank_positions(std::size_t n, const std::vector<std::uint32_t>& pos, std::size_t zmax) {
  const std::size_t k = pos.size();
  require(k <= zmax && k <= n, "subset too large to rank");
  u128 r = 0;
  for (std::size_t j = 0; j < k; ++j) r = detail::sat_add(r, checked(binom(n, j)));
  std::size_t start = 0;
  for (std::size_t i = 0; i < k; ++i) {
    require(pos[i] < n && pos[i] >= start, "positions must be increasing and in range");
    for (std::size_t v = start; v < pos[i]; ++v) r = detail::sat_add(r, checked(binom(n - 1 - v, k - 1 - i)));
    start = pos[i] + 1;
  }
  return checked(r);
}

inline std::optional<std::vector<std::uint32_t>> unrank_positions(std::size_t n, u128 r, std::size_t zmax) {
  std::size_t k = 0;
  for (; k <= std::min(n, zmax); ++k) {
    const u128 c = checked(binom(n, k));
    if (r < c) break;
    r -= c;
  }
  if (k > std::min(n, zmax)) return std::nullopt;
  std::vector<std::uint32_t> pos;
  std::size_t v = 0;
  for (std::size_t i = 0; i < k; ++i) {
    for (;; ++v) {
      const u128 c = binom(n - 1 - v, k - 1 - i);
      if (r < c) break;
      r -= c;
    }
    pos.push_back(static_cast<std::uint32_t>(v));
    ++v;
  }
  return pos;
}

// Rank of s among subsets of y (both over the same coordinates).
inline u128 rank_subset(const BitVector& y, const BitVector& s, std::size_t zmax) {
  require(subset_of(s, y), "rank_subset needs s within y");
  std::vector<std::uint32_t> pos;
  std::uint32_t k = 0;
  y.for_each_one([&](std::size_t i) {
    if (s.get(i)) pos.push_back(k);
    ++k;
  });
  return rank_positions(y.popcount(), pos, zmax);
}

inline std::optional<BitVector> unrank_subset(const BitVector& y, u128 r, std::size_t zmax) {
  const auto ys = y.indices();
  auto pos = unrank_positions(ys.size(), r, zmax);
  if (!pos) return std::nullopt;
  BitVector s(y.dim());
  for (auto p : *pos) s.set(ys[p]);
  return s;
}

}  // namespace pmatch
