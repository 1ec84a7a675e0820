#pragma once

// Four-party transcripts, random tapes and parameter derivation.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "core_types.hpp"

namespace pmatch {

enum class Player : std::uint8_t { ALICE = 0, BOB = 1, CAROL_PUB = 2, CAROL_PRI = 3, MERLIN = 4 };

inline const char* player_name(Player p) {
  switch (p) {
    case Player::ALICE: return "ALICE";
    case Player::BOB: return "BOB";
    case Player::CAROL_PUB: return "CAROL_PUB";
    case Player::CAROL_PRI: return "CAROL_PRI";
    case Player::MERLIN: return "MERLIN";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// BitString: growable bit sequence, big-endian within each appended field.
// ---------------------------------------------------------------------------

class BitString {
 public:
  BitString() = default;

  static BitString from_uint(std::uint64_t v, unsigned width) {
    BitString b;
    b.append_uint(v, width);
    return b;
  }
  static BitString from_bits(const BitVector& v) {
    BitString b;
    b.append(v);
    return b;
  }
  static BitString parse(std::string_view s) {
    BitString b;
    for (char c : s) {
      require(c == '0' || c == '1', "bit string must contain only 0/1");
      b.push_back(c == '1');
    }
    return b;
  }

  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  bool get(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1U; }

  void push_back(bool bit) {
    if (size_ % 64 == 0) words_.push_back(0);
    if (bit) words_[size_ / 64] |= std::uint64_t{1} << (size_ % 64);
    ++size_;
  }
  void append_uint(std::uint64_t v, unsigned width) {
    for (unsigned k = width; k-- > 0;) push_back((v >> k) & 1U);
  }
  // 128-bit ranks; width may exceed 64.
  void append_u128(unsigned __int128 v, unsigned width) {
    for (unsigned k = width; k-- > 0;) push_back(k < 128 ? static_cast<bool>((v >> k) & 1U) : false);
  }
  void append(const BitVector& v) {
    for (std::size_t i = 0; i < v.dim(); ++i) push_back(v.get(i));
  }
  void append(const BitString& o) {
    for (std::size_t i = 0; i < o.size_; ++i) push_back(o.get(i));
  }

  BitString slice(std::size_t from, std::size_t len) const {
    BitString b;
    for (std::size_t i = from; i < from + len; ++i) b.push_back(get(i));
    return b;
  }
  BitVector to_bitvector() const {
    BitVector v(size_);
    for (std::size_t i = 0; i < size_; ++i)
      if (get(i)) v.set(i);
    return v;
  }

  std::string to_string() const {
    std::string s(size_, '0');
    for (std::size_t i = 0; i < size_; ++i)
      if (get(i)) s[i] = '1';
    return s;
  }
  // Bits packed first-bit-high into nibbles, zero padded on the right.
  std::string hex() const {
    if (size_ == 0) return "-";
    static const char* digits = "0123456789abcdef";
    std::string s;
    for (std::size_t i = 0; i < size_; i += 4) {
      unsigned nib = 0;
      for (std::size_t j = 0; j < 4; ++j) nib = (nib << 1) | ((i + j < size_ && get(i + j)) ? 1U : 0U);
      s.push_back(digits[nib]);
    }
    return s;
  }

  friend bool operator==(const BitString& a, const BitString& b) { return a.size_ == b.size_ && a.words_ == b.words_; }
  friend bool operator<(const BitString& a, const BitString& b) {
    if (a.size_ != b.size_) return a.size_ < b.size_;
    for (std::size_t i = 0; i < a.size_; ++i)
      if (a.get(i) != b.get(i)) return b.get(i);
    return false;
  }

  const std::vector<std::uint64_t>& words() const { return words_; }

 private:
  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

class BitReader {
 public:
  explicit BitReader(const BitString& s) : s_(&s) {}
  std::size_t remaining() const { return s_->size() - pos_; }
  std::size_t position() const { return pos_; }

  std::optional<BitString> take(std::size_t n) {
    if (remaining() < n) {
      pos_ = s_->size();
      return std::nullopt;
    }
    auto out = s_->slice(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  const BitString* s_;
  std::size_t pos_ = 0;
};

inline std::uint64_t read_uint(const BitString& b) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < b.size(); ++i) v = (v << 1) | (b.get(i) ? 1U : 0U);
  return v;
}
inline unsigned __int128 read_u128(const BitString& b) {
  unsigned __int128 v = 0;
  for (std::size_t i = 0; i < b.size(); ++i) v = (v << 1) | (b.get(i) ? 1U : 0U);
  return v;
}

// Bits needed to write any value in [0, count).
inline unsigned width_for(std::uint64_t count) {
  unsigned w = 0;
  while (w < 64 && (std::uint64_t{1} << w) < count) ++w;
  return w;
}
inline unsigned width_for_u128(unsigned __int128 count) {
  unsigned w = 0;
  while (w < 128 && (static_cast<unsigned __int128>(1) << w) < count) ++w;
  return w;
}

// ---------------------------------------------------------------------------
// Status tags
// ---------------------------------------------------------------------------

enum class Tag : std::uint8_t { CONTINUE = 0, OUT0 = 1, SMALL = 2, BIG = 3 };
inline constexpr unsigned kTagBits = 2;

inline BitString tag_bits(Tag t) { return BitString::from_uint(static_cast<std::uint64_t>(t), kTagBits); }

// ---------------------------------------------------------------------------
// Messages and transcripts
// ---------------------------------------------------------------------------

struct Message {
  Player sender;
  BitString payload;
  std::string label;
};

class Transcript {
 public:
  static constexpr int kPending = -1;

  void append(Message m) {
    if (output_ != kPending) throw usage_error("append after transcript was finalized");
    totals_[static_cast<std::size_t>(m.sender)] += m.payload.size();
    messages_.push_back(std::move(m));
  }
  void append(Player p, BitString payload, std::string label) { append(Message{p, std::move(payload), std::move(label)}); }

  void finalize(int out) {
    if (output_ != kPending) throw usage_error("transcript already finalized");
    require(out == 0 || out == 1, "output must be 0 or 1");
    output_ = out;
  }

  int output() const { return output_; }
  bool finished() const { return output_ != kPending; }
  const std::vector<Message>& messages() const { return messages_; }

  std::uint64_t bits(Player p) const { return totals_[static_cast<std::size_t>(p)]; }
  std::uint64_t c_a() const { return bits(Player::ALICE); }
  std::uint64_t c_b() const { return bits(Player::BOB); }
  std::uint64_t c_c() const { return bits(Player::CAROL_PUB) + bits(Player::CAROL_PRI); }
  std::uint64_t c_m() const { return bits(Player::MERLIN); }

  std::string dump() const {
    std::ostringstream os;
    for (const auto& m : messages_)
      os << player_name(m.sender) << ' ' << m.payload.size() << ' ' << m.label << ' ' << m.payload.hex() << '\n';
    os << "OUTPUT " << output_ << '\n';
    return os.str();
  }

 private:
  std::vector<Message> messages_;
  std::array<std::uint64_t, 5> totals_{};
  int output_ = kPending;
};

// ---------------------------------------------------------------------------
// RandomTape: every draw is a pure function of (seed, stream, counter).
// ---------------------------------------------------------------------------

enum class Stream : std::uint8_t { PUB = 0, PRI = 1 };

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class RandomTape {
 public:
  RandomTape() = default;
  RandomTape(std::uint64_t seed, Stream stream) : seed_(seed), stream_(stream) {}

  static std::uint64_t draw_at(std::uint64_t seed, Stream stream, std::uint64_t counter) {
    const std::uint64_t key = splitmix64(seed ^ (static_cast<std::uint64_t>(stream) + 1) * 0xd1b54a32d192ed03ULL);
    return splitmix64(key + counter * 0x9e3779b97f4a7c15ULL);
  }

  std::uint64_t next() { return draw_at(seed_, stream_, counter_++); }

  // Uniform in [0, n) by multiply-high.
  std::uint64_t uniform(std::uint64_t n) {
    require(n > 0, "uniform over empty range");
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  BitVector bits(std::size_t dim) {
    BitVector v(dim);
    auto& w = v.mutable_words();
    for (auto& word : w) word = next();
    if (dim % 64 && !w.empty()) w.back() &= (std::uint64_t{1} << (dim % 64)) - 1;
    return v;
  }

  std::uint64_t seed() const { return seed_; }
  Stream stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_ = 0;
  Stream stream_ = Stream::PUB;
  std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

// Overrides apply at every recursion level.
struct Overrides {
  std::optional<std::uint64_t> t_cap;
  double base_coeff = 100.0;
  std::optional<double> ell;
  std::optional<std::uint64_t> t;
  std::optional<std::uint64_t> h;
  std::optional<std::uint64_t> halving;
  std::optional<std::uint64_t> iter_cap;
  std::optional<std::uint64_t> base_rounds;
};

inline std::uint64_t ceil_u(double v) { return v <= 0 ? 0 : static_cast<std::uint64_t>(std::ceil(v - 1e-12)); }

inline void validate_error_params(double eps, double delta) {
  if (!(delta > 0 && delta <= eps && eps < 0.5)) throw usage_error("need 0 < delta <= eps < 0.5");
}

inline bool is_base_case(double w, double eps, const Overrides& ov) {
  return w < 1.0 || w <= ov.base_coeff * std::log2(w / eps);
}

inline std::uint64_t base_rounds_for(double delta, const Overrides& ov) {
  if (ov.base_rounds) return *ov.base_rounds;
  return std::max<std::uint64_t>(1, ceil_u(std::log2(1.0 / delta)));
}

inline std::uint64_t apply_cap(std::uint64_t t, const Overrides& ov) {
  if (ov.t) return *ov.t;
  if (ov.t_cap && t > *ov.t_cap) return *ov.t_cap;
  return t;
}

struct SqParams {
  double w = 0, eps = 0, delta = 0;
  bool base_case = true;
  double ell = 0, eps_p = 0, delta_p = 0;
  std::uint64_t t = 0, t_uncapped = 0, h = 0, halving = 0, iter_cap = 0, base_rounds = 0;
};

inline SqParams derive_sq(double w, double eps, double delta, const Overrides& ov = {}) {
  SqParams p;
  p.w = w;
  p.eps = eps;
  p.delta = delta;
  p.delta_p = delta / 10.0;
  p.base_rounds = base_rounds_for(p.delta_p, ov);
  p.base_case = is_base_case(w, eps, ov);
  if (w < 1.0) return p;
  // Below 1 the small-set threshold w/ell would exceed w.
  p.ell = std::max(1.0, ov.ell ? *ov.ell : std::sqrt(w / std::log2(w / eps)));
  p.eps_p = eps / (20.0 * p.ell);
  const double tu = (10.0 / p.eps_p) * std::log2(1.0 / p.eps_p);
  p.t_uncapped = tu > 1e18 ? std::uint64_t{1000000000000000000ULL} : ceil_u(tu);
  p.t = apply_cap(p.t_uncapped, ov);
  p.h = ov.h ? *ov.h : ceil_u(std::log2(1.0 / p.eps_p));
  p.halving = ov.halving ? *ov.halving : ceil_u(std::log2(10.0 * p.ell / p.delta_p));
  p.iter_cap = ov.iter_cap ? *ov.iter_cap : ceil_u(2.0 * p.ell);
  return p;
}

struct PmParams {
  double w = 0, eps = 0, delta = 0;
  bool base_case = true;
  std::uint64_t t = 0, t_uncapped = 0, h = 0, halving = 0, base_rounds = 0;
};

inline PmParams derive_pm(double w, double eps, double delta, const Overrides& ov = {}) {
  PmParams p;
  p.w = w;
  p.eps = eps;
  p.delta = delta;
  p.base_rounds = base_rounds_for(delta, ov);
  p.base_case = is_base_case(w, eps, ov);
  const double tu = (100.0 / eps) * std::log2(10.0 / eps);
  p.t_uncapped = ceil_u(tu);
  p.t = apply_cap(p.t_uncapped, ov);
  p.h = ov.h ? *ov.h : ceil_u(std::log2(10.0 / eps));
  p.halving = ov.halving ? *ov.halving : ceil_u(std::log2(10.0 / delta));
  return p;
}

// Entry point used by the CLI and tests for top-level validation.
inline SqParams derive_params(std::size_t d, double w, double eps, double delta, const Overrides& ov = {}) {
  validate_error_params(eps, delta);
  if (!(w >= 1 && w <= static_cast<double>(d))) throw usage_error("need 1 <= w <= d");
  return derive_sq(w, eps, delta, ov);
}

}  // namespace pmatch
