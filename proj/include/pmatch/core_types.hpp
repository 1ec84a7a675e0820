#pragma once

// Bit vectors, ternary patterns, coordinate domains and the dataset container.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pmatch {

struct usage_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline void require(bool ok, const char* what) {
  if (!ok) throw usage_error(what);
}

// ---------------------------------------------------------------------------
// BitVector
// ---------------------------------------------------------------------------

class BitVector {
 public:
  using word_t = std::uint64_t;
  static constexpr std::size_t kWordBits = 64;

  BitVector() = default;
  explicit BitVector(std::size_t dim) : dim_(dim), words_((dim + kWordBits - 1) / kWordBits, 0) {}

  static BitVector ones(std::size_t dim) {
    BitVector v(dim);
    for (auto& w : v.words_) w = ~word_t{0};
    v.trim();
    return v;
  }

  static BitVector parse(std::string_view s) {
    BitVector v(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '1') v.set(i);
      else if (s[i] != '0') throw usage_error("bit string must contain only 0/1");
    }
    return v;
  }

  static BitVector from_indices(std::size_t dim, const std::vector<std::uint32_t>& idx) {
    BitVector v(dim);
    for (auto i : idx) {
      require(i < dim, "coordinate out of range");
      v.set(i);
    }
    return v;
  }

  std::size_t dim() const { return dim_; }
  std::size_t word_count() const { return words_.size(); }
  const std::vector<word_t>& words() const { return words_; }
  std::vector<word_t>& mutable_words() { return words_; }

  bool get(std::size_t i) const { return (words_[i / kWordBits] >> (i % kWordBits)) & 1U; }
  void set(std::size_t i, bool on = true) {
    const word_t bit = word_t{1} << (i % kWordBits);
    if (on) words_[i / kWordBits] |= bit;
    else words_[i / kWordBits] &= ~bit;
  }
  void flip(std::size_t i) { words_[i / kWordBits] ^= word_t{1} << (i % kWordBits); }

  std::size_t popcount() const {
    std::size_t c = 0;
    for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }
  bool none() const {
    return std::all_of(words_.begin(), words_.end(), [](word_t w) { return w == 0; });
  }
  bool any() const { return !none(); }

  // Parity of popcount(*this & r).
  bool dot(const BitVector& r) const {
    check_dim(r);
    word_t acc = 0;
    for (std::size_t k = 0; k < words_.size(); ++k) acc ^= words_[k] & r.words_[k];
    return std::popcount(acc) & 1;
  }

  std::size_t and_count(const BitVector& o) const {
    check_dim(o);
    std::size_t c = 0;
    for (std::size_t k = 0; k < words_.size(); ++k) c += std::popcount(words_[k] & o.words_[k]);
    return c;
  }
  std::size_t diff_count(const BitVector& o) const {
    check_dim(o);
    std::size_t c = 0;
    for (std::size_t k = 0; k < words_.size(); ++k) c += std::popcount(words_[k] & ~o.words_[k]);
    return c;
  }
  std::size_t xor_count(const BitVector& o) const {
    check_dim(o);
    std::size_t c = 0;
    for (std::size_t k = 0; k < words_.size(); ++k) c += std::popcount(words_[k] ^ o.words_[k]);
    return c;
  }
  bool intersects(const BitVector& o) const { return and_count(o) != 0; }

  BitVector& operator^=(const BitVector& o) { return apply(o, [](word_t a, word_t b) { return a ^ b; }); }
  BitVector& operator&=(const BitVector& o) { return apply(o, [](word_t a, word_t b) { return a & b; }); }
  BitVector& operator|=(const BitVector& o) { return apply(o, [](word_t a, word_t b) { return a | b; }); }
  BitVector& operator-=(const BitVector& o) { return apply(o, [](word_t a, word_t b) { return a & ~b; }); }

  friend BitVector operator^(BitVector a, const BitVector& b) { return a ^= b; }
  friend BitVector operator&(BitVector a, const BitVector& b) { return a &= b; }
  friend BitVector operator|(BitVector a, const BitVector& b) { return a |= b; }
  friend BitVector operator-(BitVector a, const BitVector& b) { return a -= b; }

  BitVector complement() const {
    BitVector v(*this);
    for (auto& w : v.words_) w = ~w;
    v.trim();
    return v;
  }

  friend bool operator==(const BitVector& a, const BitVector& b) {
    return a.dim_ == b.dim_ && a.words_ == b.words_;
  }
  // Length first, then coordinate order; a total order used for sorted keys.
  friend bool operator<(const BitVector& a, const BitVector& b) {
    if (a.dim_ != b.dim_) return a.dim_ < b.dim_;
    for (std::size_t i = 0; i < a.dim_; ++i) {
      const bool x = a.get(i), y = b.get(i);
      if (x != y) return y;
    }
    return false;
  }

  template <class F>
  void for_each_one(F&& f) const {
    for (std::size_t k = 0; k < words_.size(); ++k) {
      word_t w = words_[k];
      while (w) {
        const int b = std::countr_zero(w);
        f(k * kWordBits + static_cast<std::size_t>(b));
        w &= w - 1;
      }
    }
  }

  std::vector<std::uint32_t> indices() const {
    std::vector<std::uint32_t> out;
    for_each_one([&](std::size_t i) { out.push_back(static_cast<std::uint32_t>(i)); });
    return out;
  }

  std::string to_string() const {
    std::string s(dim_, '0');
    for_each_one([&](std::size_t i) { s[i] = '1'; });
    return s;
  }

  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL ^ dim_;
    for (auto w : words_) {
      h ^= w;
      h *= 1099511628211ULL;
      h ^= h >> 29;
    }
    return h;
  }

  void check_dim(const BitVector& o) const {
    if (o.dim_ != dim_) throw usage_error("dimension mismatch");
  }

 private:
  template <class Op>
  BitVector& apply(const BitVector& o, Op op) {
    check_dim(o);
    for (std::size_t k = 0; k < words_.size(); ++k) words_[k] = op(words_[k], o.words_[k]);
    return *this;
  }
  void trim() {
    if (dim_ % kWordBits && !words_.empty()) words_.back() &= (word_t{1} << (dim_ % kWordBits)) - 1;
  }

  std::size_t dim_ = 0;
  std::vector<word_t> words_;
};

struct BitVectorHash {
  std::size_t operator()(const BitVector& v) const { return static_cast<std::size_t>(v.hash()); }
};

inline bool subset_of(const BitVector& x, const BitVector& y) {
  x.check_dim(y);
  return x.diff_count(y) == 0;
}

// ---------------------------------------------------------------------------
// TernaryPattern
// ---------------------------------------------------------------------------

enum class Symbol : std::uint8_t { ZERO = 0, ONE = 1, STAR = 2 };

// Stored as a star mask plus the values on non-star coordinates.
class TernaryPattern {
 public:
  TernaryPattern() = default;
  explicit TernaryPattern(std::size_t dim) : stars_(dim), values_(dim) {}
  TernaryPattern(BitVector stars, BitVector values) : stars_(std::move(stars)), values_(std::move(values)) {
    stars_.check_dim(values_);
    values_ -= stars_;
  }

  static TernaryPattern parse(std::string_view s) {
    TernaryPattern p(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      switch (s[i]) {
        case '0': break;
        case '1': p.values_.set(i); break;
        case '*': p.stars_.set(i); break;
        default: throw usage_error("pattern must contain only 0/1/*");
      }
    }
    return p;
  }

  // A star-free pattern equal to v.
  static TernaryPattern exact(const BitVector& v) { return TernaryPattern(BitVector(v.dim()), v); }

  std::size_t dim() const { return stars_.dim(); }
  Symbol at(std::size_t i) const {
    if (stars_.get(i)) return Symbol::STAR;
    return values_.get(i) ? Symbol::ONE : Symbol::ZERO;
  }
  void set(std::size_t i, Symbol s) {
    stars_.set(i, s == Symbol::STAR);
    values_.set(i, s == Symbol::ONE);
  }

  const BitVector& stars() const { return stars_; }
  // Ones on non-star coordinates.
  const BitVector& ones() const { return values_; }
  BitVector zeros() const { return (stars_ | values_).complement(); }
  std::size_t star_count() const { return stars_.popcount(); }

  bool matches(const BitVector& x) const {
    stars_.check_dim(x);
    const auto& sw = stars_.words();
    const auto& vw = values_.words();
    const auto& xw = x.words();
    for (std::size_t k = 0; k < sw.size(); ++k)
      if ((xw[k] ^ vw[k]) & ~sw[k]) return false;
    return true;
  }

  // Non-star coordinates where x disagrees with the pattern.
  std::size_t mismatches(const BitVector& x) const { return ((x ^ values_) - stars_).popcount(); }

  std::string to_string() const {
    std::string s(dim(), '0');
    for (std::size_t i = 0; i < dim(); ++i) {
      const auto c = at(i);
      s[i] = c == Symbol::STAR ? '*' : (c == Symbol::ONE ? '1' : '0');
    }
    return s;
  }

  friend bool operator==(const TernaryPattern& a, const TernaryPattern& b) {
    return a.stars_ == b.stars_ && a.values_ == b.values_;
  }

 private:
  BitVector stars_;
  BitVector values_;
};

inline bool match_pm(const BitVector& x, const TernaryPattern& y) {
  if (x.dim() != y.dim()) throw usage_error("dimension mismatch");
  return y.matches(x);
}

// ---------------------------------------------------------------------------
// CoordDomain
// ---------------------------------------------------------------------------

// An ordered subset of [parent_dim), ascending.
class CoordDomain {
 public:
  CoordDomain() = default;
  CoordDomain(std::size_t parent_dim, std::vector<std::uint32_t> active)
      : parent_dim_(parent_dim), active_(std::move(active)) {
    for (std::size_t k = 0; k < active_.size(); ++k) {
      require(active_[k] < parent_dim_, "domain coordinate out of range");
      require(k == 0 || active_[k - 1] < active_[k], "domain must be strictly ascending");
    }
  }

  static CoordDomain full(std::size_t d) {
    std::vector<std::uint32_t> a(d);
    for (std::size_t i = 0; i < d; ++i) a[i] = static_cast<std::uint32_t>(i);
    return CoordDomain(d, std::move(a));
  }
  static CoordDomain from_mask(const BitVector& mask) { return CoordDomain(mask.dim(), mask.indices()); }

  std::size_t parent_dim() const { return parent_dim_; }
  std::size_t size() const { return active_.size(); }
  const std::vector<std::uint32_t>& active() const { return active_; }
  std::uint32_t operator[](std::size_t k) const { return active_[k]; }

  BitVector mask() const { return BitVector::from_indices(parent_dim_, active_); }

  // rel is a domain over positions [0, size()); the result is the same
  // selection expressed in parent coordinates.
  CoordDomain compose(const CoordDomain& rel) const {
    require(rel.parent_dim() == size(), "relative domain does not fit");
    std::vector<std::uint32_t> a;
    a.reserve(rel.size());
    for (auto k : rel.active()) a.push_back(active_[k]);
    return CoordDomain(parent_dim_, std::move(a));
  }
  CoordDomain compose(const BitVector& keep) const { return compose(from_mask(keep)); }

  CoordDomain intersect(const CoordDomain& o) const {
    require(o.parent_dim_ == parent_dim_, "domains over different parents");
    std::vector<std::uint32_t> a;
    std::set_intersection(active_.begin(), active_.end(), o.active_.begin(), o.active_.end(), std::back_inserter(a));
    return CoordDomain(parent_dim_, std::move(a));
  }

  bool contains(const CoordDomain& o) const {
    return o.parent_dim_ == parent_dim_ &&
           std::includes(active_.begin(), active_.end(), o.active_.begin(), o.active_.end());
  }

  // Place a compact vector back into parent coordinates (zeros elsewhere).
  BitVector lift(const BitVector& v) const {
    require(v.dim() == size(), "lift dimension mismatch");
    BitVector out(parent_dim_);
    v.for_each_one([&](std::size_t k) { out.set(active_[k]); });
    return out;
  }

  friend bool operator==(const CoordDomain& a, const CoordDomain& b) {
    return a.parent_dim_ == b.parent_dim_ && a.active_ == b.active_;
  }

 private:
  std::size_t parent_dim_ = 0;
  std::vector<std::uint32_t> active_;
};

inline BitVector restrict(const BitVector& x, const CoordDomain& dom) {
  require(x.dim() == dom.parent_dim(), "restrict dimension mismatch");
  BitVector out(dom.size());
  for (std::size_t k = 0; k < dom.size(); ++k)
    if (x.get(dom[k])) out.set(k);
  return out;
}

inline TernaryPattern restrict(const TernaryPattern& p, const CoordDomain& dom) {
  return TernaryPattern(restrict(p.stars(), dom), restrict(p.ones(), dom));
}

// Keep only the coordinates flagged in keep (same dimension as x).
inline BitVector compress(const BitVector& x, const BitVector& keep) {
  x.check_dim(keep);
  BitVector out(keep.popcount());
  std::size_t k = 0;
  keep.for_each_one([&](std::size_t i) {
    if (x.get(i)) out.set(k);
    ++k;
  });
  return out;
}

inline TernaryPattern compress(const TernaryPattern& p, const BitVector& keep) {
  return TernaryPattern(compress(p.stars(), keep), compress(p.ones(), keep));
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::size_t dim) : dim_(dim) {}
  Dataset(std::size_t dim, std::vector<BitVector> points) : dim_(dim), points_(std::move(points)) {
    for (const auto& p : points_) require(p.dim() == dim_, "dataset point has wrong dimension");
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const BitVector& operator[](std::size_t i) const { return points_[i]; }
  const std::vector<BitVector>& points() const { return points_; }

  void push_back(BitVector p) {
    require(p.dim() == dim_, "dataset point has wrong dimension");
    points_.push_back(std::move(p));
  }

  std::uint64_t fingerprint() const {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ (dim_ * 0x100000001b3ULL) ^ points_.size();
    for (const auto& p : points_) {
      h ^= p.hash() + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
  }

  void write(std::ostream& os) const {
    os << dim_ << ' ' << points_.size() << '\n';
    for (const auto& p : points_) os << p.to_string() << '\n';
  }

  static Dataset read(std::istream& is) {
    std::size_t d = 0, n = 0;
    if (!(is >> d >> n)) throw usage_error("dataset header must be \"d n\"");
    Dataset ds(d);
    std::string line;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(is >> line)) throw usage_error("dataset truncated");
      if (line.size() != d) throw usage_error("dataset row has wrong length");
      ds.push_back(BitVector::parse(line));
    }
    return ds;
  }

  static Dataset load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw usage_error("cannot open dataset file: " + path);
    return read(in);
  }
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw usage_error("cannot write dataset file: " + path);
    write(out);
  }

 private:
  std::size_t dim_ = 0;
  std::vector<BitVector> points_;
};

// Query files hold one pattern per line.
inline std::vector<TernaryPattern> read_queries(std::istream& is) {
  std::vector<TernaryPattern> out;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    out.push_back(TernaryPattern::parse(line));
  }
  return out;
}

inline std::vector<TernaryPattern> load_queries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open query file: " + path);
  return read_queries(in);
}

inline void save_queries(const std::string& path, const std::vector<TernaryPattern>& qs) {
  std::ofstream out(path);
  if (!out) throw usage_error("cannot write query file: " + path);
  for (const auto& q : qs) out << q.to_string() << '\n';
}

}  // namespace pmatch
