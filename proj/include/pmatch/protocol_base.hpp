#pragma once

// Base-case protocol: Merlin sends a relative encoding of Alice's input,
// Bob reconstructs it, and random parity rounds check the two agree.

#include <cmath>
#include <functional>
#include <optional>
#include <string>

#include "core_types.hpp"
#include "subset_rank.hpp"
#include "transcript.hpp"

namespace pmatch {

// ---------------------------------------------------------------------------
// Run engine shared by all protocols
// ---------------------------------------------------------------------------

enum class AdviceMode : std::uint8_t {
  GIVEN,   // read a fixed advice string
  HONEST,  // Merlin computes the special advice on the fly
};

struct RunStats {
  int max_depth = 0;  // partial-match recursion
  int max_sq_depth = 0;
  int loop_exhausted = 0;
  int soft_check_misses = 0;
  int base_calls = 0;
};

class Engine {
 public:
  // pri_seed keys the private tape; by default it shares the public seed.
  Engine(std::uint64_t seed, Overrides ov, AdviceMode mode, BitString advice = {},
         std::optional<std::uint64_t> pri_seed = std::nullopt)
      : pub(seed, Stream::PUB), pri(pri_seed.value_or(seed), Stream::PRI), ov(std::move(ov)), mode_(mode),
        given_(std::move(advice)), reader_(given_) {}
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  Transcript tr;
  RandomTape pub;
  RandomTape pri;
  Overrides ov;
  RunStats stats;
  // Replay runs only the public part; base calls stop after Merlin speaks.
  bool replay = false;

  AdviceMode mode() const { return mode_; }
  const BitString& collected_advice() const { return collected_; }

  void say(Player p, BitString payload, std::string label) { tr.append(p, std::move(payload), std::move(label)); }
  void say_tag(Player p, Tag t, std::string label) { say(p, tag_bits(t), std::move(label)); }

  // Returns nullopt when the given advice runs short.
  std::optional<BitString> merlin_segment(std::size_t width, const std::function<BitString()>& honest) {
    std::optional<BitString> m;
    if (mode_ == AdviceMode::HONEST) {
      m = honest();
      require(m->size() == width, "special advice has wrong width");
      collected_.append(*m);
      say(Player::MERLIN, *m, "advice-seg");
    } else {
      const auto rem = reader_.remaining();
      if (rem < width) {
        say(Player::MERLIN, *reader_.take(rem), "advice-seg");
      } else {
        m = reader_.take(width);
        say(Player::MERLIN, *m, "advice-seg");
      }
    }
    committed_ = true;
    return m;
  }

  BitVector pri_bits(std::size_t dim) {
    if (!committed_) throw std::logic_error("private tape drawn before advice was committed");
    return pri.bits(dim);
  }
  void release_pri() { committed_ = false; }

  // Unread advice bits reject the run.
  void finish(int out) {
    if (mode_ == AdviceMode::GIVEN && reader_.remaining() > 0) {
      say(Player::MERLIN, *reader_.take(reader_.remaining()), "advice-tail");
      out = 0;
    }
    tr.finalize(out < 0 ? 0 : out);
  }

 private:
  AdviceMode mode_;
  BitString given_;
  BitReader reader_;
  BitString collected_;
  bool committed_ = false;
};

// ---------------------------------------------------------------------------
// Advice encodings
// ---------------------------------------------------------------------------

enum class BaseMode : std::uint8_t { PM, SQ };

inline std::size_t floor_size(double v) { return v <= 0 ? 0 : static_cast<std::size_t>(std::floor(v + 1e-12)); }

// Width of a subset-query advice segment; public for given (z, w).
inline std::size_t sq_advice_width(double z, double w) {
  return width_for_u128(subset_count(floor_size(w), floor_size(z)));
}

inline BitString special_advice_pm(const BitVector& x, const TernaryPattern& y) {
  return BitString::from_bits(compress(x, y.stars()));
}

// Rank of x∩y among subsets of y of size at most z, padded to the public width.
inline BitString special_advice_sq(const BitVector& x, const BitVector& y, double z, double w) {
  const auto s = x & y;
  require(s.popcount() <= floor_size(z), "special advice needs |x∩y| <= z");
  BitString b;
  b.append_u128(rank_subset(y, s, floor_size(z)), static_cast<unsigned>(sq_advice_width(z, w)));
  return b;
}

// Bob's reconstruction; malformed advice decodes to the all-ones sentinel.
inline BitVector reconstruct_pm(const TernaryPattern& y, const std::optional<BitString>& m) {
  if (!m || m->size() != y.star_count()) return BitVector::ones(y.dim());
  BitVector out = y.ones();
  std::size_t k = 0;
  y.stars().for_each_one([&](std::size_t i) { out.set(i, m->get(k++)); });
  return out;
}

inline BitVector reconstruct_sq(const BitVector& y, double z, const std::optional<BitString>& m) {
  if (!m) return BitVector::ones(y.dim());
  auto s = unrank_subset(y, read_u128(*m), floor_size(z));
  return s ? *s : BitVector::ones(y.dim());
}

// ---------------------------------------------------------------------------
// Protocol
// ---------------------------------------------------------------------------

struct BaseCall {
  BaseMode mode = BaseMode::SQ;
  double z = 0;
  double w = 0;
  double delta = 0.1;
  // Roles reversed: the real Bob plays the first party.
  bool swapped = false;
};

// One invocation inside a larger run. Returns the output bit, or -1 when the
// engine is replaying and the private part was skipped.
inline int base_step(Engine& e, const BaseCall& c, const BitVector& x, const BitVector* y_sq,
                     const TernaryPattern* y_pm) {
  const Player first = c.swapped ? Player::BOB : Player::ALICE;
  const Player second = c.swapped ? Player::ALICE : Player::BOB;
  ++e.stats.base_calls;
  if (c.z > c.w) {
    e.say_tag(first, Tag::OUT0, "base-abort");
    return 0;
  }
  std::optional<BitString> m;
  if (c.mode == BaseMode::PM) {
    require(y_pm && y_pm->dim() == x.dim(), "base PM needs a pattern of matching dimension");
    m = e.merlin_segment(y_pm->star_count(), [&] { return special_advice_pm(x, *y_pm); });
  } else {
    require(y_sq && y_sq->dim() == x.dim(), "base SQ needs a set of matching dimension");
    m = e.merlin_segment(sq_advice_width(c.z, c.w), [&] { return special_advice_sq(x, *y_sq, c.z, c.w); });
  }
  if (e.replay) {
    e.release_pri();
    return -1;
  }
  const BitVector ybar = c.mode == BaseMode::PM ? reconstruct_pm(*y_pm, m) : reconstruct_sq(*y_sq, c.z, m);

  const auto t = base_rounds_for(c.delta, e.ov);
  BitString rs, a, b;
  for (std::uint64_t i = 0; i < t; ++i) {
    const BitVector r = e.pri_bits(x.dim());
    rs.append(r);
    a.push_back(x.dot(r));
    b.push_back(ybar.dot(r));
  }
  e.release_pri();
  e.say(Player::CAROL_PRI, rs, "parity-vecs");
  e.say(first, a, "parity-a");
  e.say(second, b, "parity-b");
  return a == b ? 1 : 0;
}

inline Transcript run_base(const BaseCall& c, const BitVector& x, const BitVector& y, const BitString& advice,
                           std::uint64_t seed, const Overrides& ov = {},
                           std::optional<std::uint64_t> pri_seed = std::nullopt) {
  Engine e(seed, ov, AdviceMode::GIVEN, advice, pri_seed);
  e.finish(base_step(e, BaseCall{BaseMode::SQ, c.z, c.w, c.delta, c.swapped}, x, &y, nullptr));
  return std::move(e.tr);
}

inline Transcript run_base(const BaseCall& c, const BitVector& x, const TernaryPattern& y, const BitString& advice,
                           std::uint64_t seed, const Overrides& ov = {},
                           std::optional<std::uint64_t> pri_seed = std::nullopt) {
  Engine e(seed, ov, AdviceMode::GIVEN, advice, pri_seed);
  e.finish(base_step(e, BaseCall{BaseMode::PM, c.z, c.w, c.delta, c.swapped}, x, nullptr, &y));
  return std::move(e.tr);
}

}  // namespace pmatch
