#pragma once

// Sparse partial-match protocol: re-center on a sampled near match, then
// solve the two subset queries that together decide the match.

#include "protocol_sq.hpp"

namespace pmatch {

struct PmConfig {
  double w = 16;
  double eps = 0.25;
  double delta = 0.01;
  Overrides ov;
};

// Bob's side of the re-centering on X.
struct Recentered {
  BitVector ones;     // non-star coordinates where y disagrees with X
  BitVector sq_side;  // stars of y together with ones
};

inline Recentered recenter(const TernaryPattern& y, const BitVector& X) {
  BitVector ones = (y.ones() ^ X) - y.stars();
  BitVector sq = ones | y.stars();
  return {std::move(ones), std::move(sq)};
}

inline std::size_t near_match_index(const std::vector<BitVector>& xs, const TernaryPattern& y, std::uint64_t h) {
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (y.mismatches(xs[i]) <= h) return i;
  return xs.size();
}

// Recursion depth allowed by the halving analysis.
inline double pm_depth_bound(double w, double eps) {
  const double r = w / std::log2(1.0 / eps);
  return r <= 1.0 ? 0.0 : 2.0 * std::log2(r);
}

inline int pm_step(Engine& e, double w, double eps, double delta, const EmpiricalDistribution& lambda,
                   const BitVector& x, const TernaryPattern& y, int level = 0) {
  e.stats.max_depth = std::max(e.stats.max_depth, level);
  const PmParams P = derive_pm(w, eps, delta, e.ov);
  if (P.base_case) return base_step(e, BaseCall{BaseMode::PM, w, w, delta}, x, nullptr, &y);

  std::vector<BitVector> samples;
  for (std::uint64_t i = 0; i < P.t; ++i) {
    auto dr = lambda.sample(e.pub);
    if (!dr) break;
    samples.push_back(std::move(dr->value));
  }
  if (samples.empty()) {
    e.say(Player::CAROL_PUB, {}, "samples-empty");
    return 0;
  }
  e.say(Player::CAROL_PUB, pack(samples), "samples");

  const std::size_t istar = near_match_index(samples, y, P.h);
  e.say(Player::BOB, BitString::from_uint(istar, width_for(P.t + 1)), "i*");
  if (istar == samples.size()) {
    const auto S = draw_halving_sets(e.pub, P.halving, lambda.dim());
    e.say(Player::CAROL_PUB, pack(S), "halving-sets");
    std::size_t jstar = S.size();
    for (std::size_t j = 0; j < S.size(); ++j)
      if (static_cast<double>(y.stars().and_count(S[j])) <= 2.0 * w / 3.0) {
        jstar = j;
        break;
      }
    e.say(Player::BOB, BitString::from_uint(jstar, width_for(P.halving + 1)), "j*");
    if (jstar == S.size()) return 1;
    const auto& keep = S[jstar];
    return pm_step(e, 2.0 * w / 3.0, eps / 2.0, delta / 10.0, lambda.restrict_rel(keep), compress(x, keep),
                   compress(y, keep), level + 1);
  }

  const BitVector& X = samples[istar];
  const BitVector xp = x ^ X;
  const Recentered yp = recenter(y, X);
  const double wh = w + static_cast<double>(P.h);
  if (static_cast<double>(xp.popcount()) > wh) {
    e.say_tag(Player::ALICE, Tag::OUT0, "pm-size");
    return 0;
  }
  e.say_tag(Player::ALICE, Tag::CONTINUE, "pm-size");
  // Both subroutines always run; their advice segments appear in this order.
  const int a = sq_step(e, wh, eps / 10.0, delta / 10.0, lambda.shifted(X), xp, yp.sq_side);
  const int b = base_step(e, BaseCall{BaseMode::SQ, static_cast<double>(P.h), wh, delta / 10.0, true}, yp.ones, &xp,
                          nullptr);
  if (a < 0 || b < 0) return -1;
  return a & b;
}

inline void check_pm_inputs(const PmConfig& c, const EmpiricalDistribution& lambda, const BitVector& x,
                            const TernaryPattern& y) {
  validate_error_params(c.eps, c.delta);
  require(x.dim() == lambda.dim() && y.dim() == lambda.dim(), "inputs must match the distribution's dimension");
  require(static_cast<double>(y.star_count()) <= c.w, "query has more than w stars");
}

inline RunResult run_pm(const PmConfig& c, const EmpiricalDistribution& lambda, const BitVector& x,
                        const TernaryPattern& y, const BitString& advice, std::uint64_t seed,
                        std::optional<std::uint64_t> pri_seed = std::nullopt) {
  check_pm_inputs(c, lambda, x, y);
  Engine e(seed, c.ov, AdviceMode::GIVEN, advice, pri_seed);
  e.finish(pm_step(e, c.w, c.eps, c.delta, lambda, x, y));
  return RunResult{std::move(e.tr), e.stats};
}

inline BitString pm_special_advice(const PmConfig& c, const EmpiricalDistribution& lambda, const BitVector& x,
                                   const TernaryPattern& y, std::uint64_t seed) {
  check_pm_inputs(c, lambda, x, y);
  Engine e(seed, c.ov, AdviceMode::HONEST);
  e.replay = true;
  pm_step(e, c.w, c.eps, c.delta, lambda, x, y);
  return e.collected_advice();
}

}  // namespace pmatch
