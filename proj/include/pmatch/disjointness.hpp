#pragma once

// Merlin-free disjointness protocol over a product distribution, with
// randomness fixing.
//
// The output reports "intersecting" (1) or "disjoint" (0). An intersecting
// verdict always comes with a witness coordinate, so it is never wrong; the
// only error is an intersecting pair reported disjoint.
//
// Each round Alice sends one bit: 0 means her remaining set is large and the
// round continues; 1 means she next sends her remaining set explicitly (or
// the reserved value one past the last rank, announcing a witness hit).
// For a large set, Carol samples candidates from Alice's posterior, Bob
// names the first one that meets y in at most h coordinates and sends that
// meet as a certificate. Alice either finds a witness in it or both sides
// drop the candidate's coordinates. Without a candidate, Carol halves the
// coordinate set.
//
// Alice's and Bob's totals are capped at
//   a_max = ell + ceil(d/ell) * log2(3e * ell)
//   b_max = 2 ell * log2(16 ell / eps)
// and a message that would cross its cap ends the run with "disjoint".

#include <cmath>
#include <numbers>

#include "empirical_dist.hpp"
#include "instances.hpp"
#include "subset_rank.hpp"
#include "transcript.hpp"

namespace pmatch {

struct StdParams {
  std::size_t d = 0;
  double eps = 0.2;
  std::uint64_t ell = 0;  // 0: ceil(sqrt(d / log2(1/eps)))
  std::optional<std::uint64_t> h;
  std::optional<std::uint64_t> t;
};

struct StdDerived {
  std::size_t d = 0;
  double eps = 0;
  std::uint64_t ell = 0;
  std::uint64_t small = 0;  // ceil(d/ell): sets this size or less are sent explicitly
  std::uint64_t t = 0;
  std::uint64_t h = 0;
  double a_max = 0;
  double b_max = 0;
};

inline std::uint64_t default_ell(std::size_t d, double eps) {
  return std::max<std::uint64_t>(1, ceil_u(std::sqrt(static_cast<double>(d) / std::log2(1.0 / eps))));
}

inline StdDerived derive_std(const StdParams& p) {
  require(p.d >= 1, "need d >= 1");
  require(p.eps > 0 && p.eps < 0.5, "need 0 < eps < 0.5");
  StdDerived s;
  s.d = p.d;
  s.eps = p.eps;
  s.ell = p.ell ? p.ell : default_ell(p.d, p.eps);
  s.small = (p.d + s.ell - 1) / s.ell;
  const double l = static_cast<double>(s.ell);
  // log2(t + 1) stays within log2(16 ell / eps).
  s.t = p.t ? *p.t : std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::floor(16.0 * l / p.eps)) - 1);
  s.h = p.h ? *p.h : ceil_u(std::log2(1.0 / p.eps));
  s.a_max = l + static_cast<double>(s.small) * std::log2(3.0 * std::numbers::e * l);
  s.b_max = 2.0 * l * std::log2(16.0 * l / p.eps);
  return s;
}

struct StdResult {
  int intersecting = 0;
  Transcript transcript;
  std::uint64_t a = 0, b = 0;
  std::uint64_t rounds = 0;
  bool budget_stop = false;
};

namespace std_detail {

// Support indices whose projection has more than `small` ones on U and
// avoids every certificate Alice has answered with a miss.
inline std::vector<std::uint32_t> posterior(const EmpiricalDistribution& lam, const std::vector<std::uint32_t>& support,
                                            const BitVector& U, std::uint64_t small) {
  std::vector<std::uint32_t> out;
  for (auto i : support)
    if (lam.dataset()[i].and_count(U) > small) out.push_back(i);
  return out;
}

}  // namespace std_detail

// rho is Bob's distribution; this protocol never samples from it.
inline StdResult run_std(const EmpiricalDistribution& lambda, const EmpiricalDistribution& rho, const BitVector& x,
                         const BitVector& y, std::uint64_t seed, const StdParams& params) {
  const StdDerived P = derive_std(params);
  require(lambda.dim() == P.d && rho.dim() == P.d, "distribution dimension mismatch");
  require(x.dim() == P.d && y.dim() == P.d, "input dimension mismatch");
  require(lambda.domain().size() == lambda.dataset().dim(), "lambda must be an unrestricted distribution");

  StdResult res;
  RandomTape pub(seed, Stream::PUB);
  BitVector U = BitVector::ones(P.d);
  std::vector<std::uint32_t> support = lambda.support();
  const auto& base = lambda.dataset();

  auto send = [&](Player p, BitString bits, const char* label) {
    auto& used = p == Player::ALICE ? res.a : res.b;
    const double cap = p == Player::ALICE ? P.a_max : P.b_max;
    if (static_cast<double>(used + bits.size()) > cap) return false;
    used += bits.size();
    res.transcript.append(Message{p, std::move(bits), label});
    return true;
  };
  auto stop = [&](int verdict) {
    res.intersecting = verdict;
    res.transcript.finalize(verdict);
    return res;
  };
  auto budget_stop = [&] {
    res.budget_stop = true;
    return stop(0);
  };

  bool hit = false;
  for (;;) {
    ++res.rounds;
    const BitVector xu = x & U;
    const bool explicit_next = hit || xu.popcount() <= P.small;
    if (!send(Player::ALICE, BitString::from_uint(explicit_next ? 1 : 0, 1), "round")) return budget_stop();
    if (explicit_next) {
      const auto count = subset_count(U.popcount(), P.small);
      const auto width = width_for_u128(count + 1);
      BitString m;
      m.append_u128(hit ? count : rank_subset(U, xu, P.small), width);
      if (!send(Player::ALICE, std::move(m), hit ? "witness-hit" : "explicit-set")) return budget_stop();
      return stop(hit || xu.intersects(y) ? 1 : 0);
    }

    support = std_detail::posterior(lambda, support, U, P.small);
    if (support.empty()) return stop(0);
    std::vector<BitVector> samples;
    for (std::uint64_t i = 0; i < P.t; ++i) samples.push_back(base[support[pub.uniform(support.size())]] & U);
    res.transcript.append(Message{Player::CAROL_PUB, {}, "samples"});

    const BitVector yu = y & U;
    std::size_t istar = samples.size();
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].and_count(yu) <= P.h) {
        istar = i;
        break;
      }
    if (!send(Player::BOB, BitString::from_uint(istar, width_for(P.t + 1)), "index")) return budget_stop();

    if (istar == samples.size()) {
      const BitVector S = pub.bits(P.d) & U;
      res.transcript.append(Message{Player::CAROL_PUB, BitString::from_bits(S), "halving"});
      U = S;
      continue;
    }

    const BitVector& X = samples[istar];
    const BitVector cert = X & yu;
    const std::size_t sz = cert.popcount();
    BitString cb = BitString::from_uint(sz, width_for(P.h + 1));
    // Rank among the size-sz subsets of X: offset past the smaller sizes.
    const u128 r = rank_subset(X, cert, sz) - (sz ? subset_count(X.popcount(), sz - 1) : 0);
    cb.append_u128(r, width_for_u128(binom(X.popcount(), sz)));
    if (!send(Player::BOB, std::move(cb), "certificate")) return budget_stop();

    if (x.intersects(cert)) {
      hit = true;
      continue;
    }
    U = U - X;
    std::vector<std::uint32_t> kept;
    for (auto i : support)
      if (!base[i].intersects(cert)) kept.push_back(i);
    support = std::move(kept);
  }
}

struct FixedSeed {
  std::uint64_t seed = 0;
  std::vector<double> selection_error;  // per candidate, same order
  Estimate heldout;
};

// Draws (x, y) pairs from λ × ρ with a generator keyed by `stream`.
inline double std_error_rate(const EmpiricalDistribution& lambda, const EmpiricalDistribution& rho,
                             const StdParams& p, std::uint64_t seed, std::uint64_t trials, std::uint64_t stream,
                             std::uint64_t* errors_out = nullptr) {
  InstanceRng rng(stream);
  std::uint64_t errors = 0;
  for (std::uint64_t k = 0; k < trials; ++k) {
    const auto& x = lambda.dataset()[lambda.support()[rng.below(lambda.support_size())]];
    const auto& y = rho.dataset()[rho.support()[rng.below(rho.support_size())]];
    const int truth = x.intersects(y) ? 1 : 0;
    if (run_std(lambda, rho, x, y, seed, p).intersecting != truth) ++errors;
  }
  if (errors_out) *errors_out = errors;
  return static_cast<double>(errors) / static_cast<double>(trials);
}

// Picks the candidate seed with the smallest error on one batch of pairs and
// reports its error on a second, independent batch.
inline FixedSeed fix_randomness(const EmpiricalDistribution& lambda, const EmpiricalDistribution& rho,
                                const StdParams& p, const std::vector<std::uint64_t>& candidate_seeds,
                                std::uint64_t trials, std::uint64_t sample_seed = 1) {
  require(!candidate_seeds.empty(), "need at least one candidate seed");
  require(trials >= 1, "need at least one trial");
  FixedSeed out;
  const std::uint64_t selection_stream = sample_seed * 2;
  const std::uint64_t heldout_stream = sample_seed * 2 + 1;
  std::size_t best = 0;
  for (std::size_t k = 0; k < candidate_seeds.size(); ++k) {
    out.selection_error.push_back(std_error_rate(lambda, rho, p, candidate_seeds[k], trials, selection_stream));
    if (out.selection_error[k] < out.selection_error[best]) best = k;
  }
  out.seed = candidate_seeds[best];
  std::uint64_t errors = 0;
  std_error_rate(lambda, rho, p, out.seed, trials, heldout_stream, &errors);
  out.heldout = make_estimate(errors, trials);
  return out;
}

// C(d-k, l) / C(d, l): probability that uniform size-k and size-l sets are disjoint.
inline double disjoint_probability_exact(std::size_t d, std::size_t k, std::size_t l) {
  require(k <= d && l <= d, "set sizes exceed d");
  double p = 1.0;
  for (std::size_t i = 0; i < l; ++i) p *= i + k < d ? static_cast<double>(d - k - i) / static_cast<double>(d - i) : 0.0;
  return p;
}

// Monte-Carlo check that uniform size-k and size-l sets are disjoint with
// probability at least eps, under the hypotheses k <= l < d/3 and
// k*l < d ln(1/eps) / 3.
inline bool disjoint_probability_check(std::size_t d, std::size_t k, std::size_t l, double eps,
                                       std::uint64_t trials = 20000, std::uint64_t seed = 1) {
  require(eps > 0 && eps < 0.5, "need 0 < eps < 0.5");
  require(k <= l && 3 * l < d, "need k <= l < d/3");
  require(static_cast<double>(k * l) < static_cast<double>(d) * std::log(1.0 / eps) / 3.0,
          "need k*l < d ln(1/eps) / 3");
  InstanceRng rng(seed);
  std::uint64_t disjoint = 0;
  for (std::uint64_t i = 0; i < trials; ++i) {
    BitVector a(d), b(d);
    for (auto c : rng.choose(d, k)) a.set(c);
    for (auto c : rng.choose(d, l)) b.set(c);
    if (!a.intersects(b)) ++disjoint;
  }
  const Estimate e = make_estimate(disjoint, trials);
  return e.mean >= eps - 3.0 * e.stderr_;
}

}  // namespace pmatch
