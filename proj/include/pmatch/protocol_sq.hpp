#pragma once

// Sparse subset-query protocol: shed near-subset samples of λ until Alice's
// set is small, then hand off to the base protocol; fall back to random
// halving when no sample is close.

#include "empirical_dist.hpp"
#include "protocol_base.hpp"

namespace pmatch {

struct SqConfig {
  double w = 16;
  double eps = 0.25;
  double delta = 0.01;
  Overrides ov;
};

struct RunResult {
  Transcript transcript;
  RunStats stats;
  int output() const { return transcript.output(); }
};

// Minimum index whose set is within h of being a subset of y; t if none.
inline std::size_t near_subset_index(const std::vector<BitVector>& xs, const BitVector& y, std::uint64_t h) {
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (xs[i].diff_count(y) <= h) return i;
  return xs.size();
}

inline BitString pack(const std::vector<BitVector>& vs) {
  BitString b;
  for (const auto& v : vs) b.append(v);
  return b;
}

inline std::vector<BitVector> draw_halving_sets(RandomTape& tape, std::size_t count, std::size_t dim) {
  std::vector<BitVector> out;
  out.reserve(count);
  for (std::size_t j = 0; j < count; ++j) out.push_back(tape.bits(dim));
  return out;
}

// Bob's certificate: rank of X \ y among subsets of X with at most h elements.
inline BitString certificate_bits(const BitVector& X, const BitVector& s, std::uint64_t h) {
  BitString b;
  b.append_u128(rank_subset(X, s, h), width_for_u128(subset_count(X.popcount(), h)));
  return b;
}

inline int sq_step(Engine& e, double w, double eps, double delta, const EmpiricalDistribution& lambda_in,
                   BitVector x, BitVector y, int level = 0) {
  e.stats.max_sq_depth = std::max(e.stats.max_sq_depth, level);
  const SqParams P = derive_sq(w, eps, delta, e.ov);
  if (P.base_case) {
    if (static_cast<double>(x.popcount()) > w) {
      e.say_tag(Player::ALICE, Tag::OUT0, "sq-size");
      return 0;
    }
    e.say_tag(Player::ALICE, Tag::CONTINUE, "sq-size");
    return base_step(e, BaseCall{BaseMode::SQ, w, w, P.delta_p}, x, &y, nullptr);
  }

  EmpiricalDistribution lambda = lambda_in;
  double wp = w;
  const double small = w / P.ell;
  for (std::uint64_t iter = 0; iter < P.iter_cap; ++iter) {
    const double xs = static_cast<double>(x.popcount());
    if (xs > wp) {
      e.say_tag(Player::ALICE, Tag::OUT0, "sq-status");
      return 0;
    }
    if (xs <= small) {
      e.say_tag(Player::ALICE, Tag::SMALL, "sq-status");
      return base_step(e, BaseCall{BaseMode::SQ, small, w, P.delta_p}, x, &y, nullptr);
    }
    e.say_tag(Player::ALICE, Tag::BIG, "sq-status");

    std::vector<BitVector> samples;
    const auto lo = static_cast<long long>(floor_size(small));
    const auto hi = static_cast<long long>(floor_size(wp));
    for (std::uint64_t i = 0; i < P.t; ++i) {
      auto dr = lambda.sample_size_conditioned(lo, hi, e.pub);
      if (!dr) break;
      samples.push_back(std::move(dr->value));
    }
    if (samples.empty()) {
      // No support point in the size window: the branch outputs 0.
      e.say(Player::CAROL_PUB, {}, "samples-empty");
      return 0;
    }
    e.say(Player::CAROL_PUB, pack(samples), "samples");

    const std::size_t istar = near_subset_index(samples, y, P.h);
    e.say(Player::BOB, BitString::from_uint(istar, width_for(P.t + 1)), "i*");
    if (istar == samples.size()) {
      const auto S = draw_halving_sets(e.pub, P.halving, lambda.dim());
      e.say(Player::CAROL_PUB, pack(S), "halving-sets");
      std::size_t jstar = S.size();
      for (std::size_t j = 0; j < S.size(); ++j)
        if (static_cast<double>(y.and_count(S[j])) <= 2.0 * wp / 3.0) {
          jstar = j;
          break;
        }
      e.say(Player::BOB, BitString::from_uint(jstar, width_for(P.halving + 1)), "j*");
      if (jstar == S.size()) return 1;
      const auto& keep = S[jstar];
      return sq_step(e, 2.0 * wp / 3.0, eps / 2.0, P.delta_p, lambda.restrict_rel(keep), compress(x, keep),
                     compress(y, keep), level + 1);
    }

    const BitVector& X = samples[istar];
    const BitVector s = X - y;
    e.say(Player::BOB, certificate_bits(X, s, P.h), "cert");
    if (x.intersects(s)) {
      e.say_tag(Player::ALICE, Tag::OUT0, "cert-check");
      return 0;
    }
    e.say_tag(Player::ALICE, Tag::CONTINUE, "cert-check");
    const auto shed = X.and_count(y);
    if (static_cast<double>(shed) < 0.9 * small) ++e.stats.soft_check_misses;
    const BitVector keep = X.complement();
    x = compress(x, keep);
    y = compress(y, keep);
    lambda = lambda.restrict_rel(keep);
    wp -= static_cast<double>(shed);
  }

  // Loop cap reached without a decision.
  ++e.stats.loop_exhausted;
  if (static_cast<double>(x.popcount()) > wp) {
    e.say_tag(Player::ALICE, Tag::OUT0, "sq-exhausted");
    return 0;
  }
  e.say_tag(Player::ALICE, Tag::CONTINUE, "sq-exhausted");
  return base_step(e, BaseCall{BaseMode::SQ, std::max(wp, 0.0), w, P.delta_p}, x, &y, nullptr);
}

inline void check_sq_inputs(const SqConfig& c, const EmpiricalDistribution& lambda, const BitVector& x,
                            const BitVector& y) {
  validate_error_params(c.eps, c.delta);
  require(x.dim() == lambda.dim() && y.dim() == lambda.dim(), "inputs must match the distribution's dimension");
  require(static_cast<double>(y.popcount()) <= c.w, "query has more than w ones");
}

inline RunResult run_sq(const SqConfig& c, const EmpiricalDistribution& lambda, const BitVector& x, const BitVector& y,
                        const BitString& advice, std::uint64_t seed,
                        std::optional<std::uint64_t> pri_seed = std::nullopt) {
  check_sq_inputs(c, lambda, x, y);
  Engine e(seed, c.ov, AdviceMode::GIVEN, advice, pri_seed);
  e.finish(sq_step(e, c.w, c.eps, c.delta, lambda, x, y));
  return RunResult{std::move(e.tr), e.stats};
}

// Replays the public part with an honest Merlin and returns the advice it sent.
inline BitString sq_special_advice(const SqConfig& c, const EmpiricalDistribution& lambda, const BitVector& x,
                                   const BitVector& y, std::uint64_t seed) {
  check_sq_inputs(c, lambda, x, y);
  Engine e(seed, c.ov, AdviceMode::HONEST);
  e.replay = true;
  sq_step(e, c.w, c.eps, c.delta, lambda, x, y);
  return e.collected_advice();
}

}  // namespace pmatch
