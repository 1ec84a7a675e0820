#pragma once

// Uniform distribution over a dataset, viewed through a coordinate domain.

#include <optional>
#include <vector>

#include "core_types.hpp"
#include "transcript.hpp"

namespace pmatch {

struct Draw {
  std::uint32_t index;  // dataset index
  BitVector value;      // projected onto the current domain
};

// The dataset must outlive every distribution derived from it.
class EmpiricalDistribution {
 public:
  EmpiricalDistribution() = default;

  explicit EmpiricalDistribution(const Dataset& ds)
      : base_(&ds), domain_(CoordDomain::full(ds.dim())), shift_(ds.dim()) {
    support_.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) support_[i] = static_cast<std::uint32_t>(i);
    rebuild();
  }

  EmpiricalDistribution(const Dataset& ds, std::vector<std::uint32_t> support)
      : base_(&ds), domain_(CoordDomain::full(ds.dim())), support_(std::move(support)), shift_(ds.dim()) {
    for (auto i : support_) require(i < ds.size(), "support index out of range");
    rebuild();
  }

  const Dataset& dataset() const { return *base_; }
  const CoordDomain& domain() const { return domain_; }
  const std::vector<std::uint32_t>& support() const { return support_; }
  const BitVector& shift() const { return shift_; }
  std::size_t dim() const { return domain_.size(); }
  std::size_t support_size() const { return support_.size(); }
  // Word operations spent building the size buckets of this value.
  std::uint64_t build_work() const { return work_; }

  BitVector project(std::uint32_t index) const { return restrict((*base_)[index] ^ shift_, domain_); }

  std::optional<Draw> sample(RandomTape& tape) const {
    if (support_.empty()) return std::nullopt;
    const auto i = support_[tape.uniform(support_.size())];
    return Draw{i, project(i)};
  }

  // Uniform over support points whose projected popcount s has lo < s <= hi.
  std::optional<Draw> sample_size_conditioned(long long lo, long long hi, RandomTape& tape) const {
    const auto [b, e] = bucket_range(lo, hi);
    if (b >= e) return std::nullopt;
    const auto i = by_size_[b + tape.uniform(e - b)];
    return Draw{i, project(i)};
  }

  std::size_t count_size_conditioned(long long lo, long long hi) const {
    const auto [b, e] = bucket_range(lo, hi);
    return e > b ? e - b : 0;
  }

  // sub is given in original coordinates and must lie inside the current domain.
  EmpiricalDistribution restrict_dist(const CoordDomain& sub) const {
    if (!domain_.contains(sub)) throw usage_error("restriction domain is not a sub-domain");
    EmpiricalDistribution out(*this);
    out.domain_ = sub;
    out.rebuild();
    return out;
  }

  // keep flags positions of the current domain.
  EmpiricalDistribution restrict_rel(const BitVector& keep) const { return restrict_dist(domain_.compose(keep)); }

  // Distribution of v xor s for v drawn from this one; s is compact.
  EmpiricalDistribution shifted(const BitVector& s) const {
    EmpiricalDistribution out(*this);
    out.shift_ ^= domain_.lift(s);
    out.rebuild();
    return out;
  }

  // Conditioning on a predicate over projected values (keeps the domain).
  template <class Pred>
  EmpiricalDistribution filtered(Pred&& keep) const {
    EmpiricalDistribution out(*this);
    out.support_.clear();
    for (auto i : support_)
      if (keep(project(i))) out.support_.push_back(i);
    out.rebuild();
    return out;
  }

 private:
  std::pair<std::size_t, std::size_t> bucket_range(long long lo, long long hi) const {
    const long long top = static_cast<long long>(dim());
    long long a = std::max<long long>(lo + 1, 0);
    long long b = std::min<long long>(hi, top);
    if (a > b) return {0, 0};
    return {offsets_[static_cast<std::size_t>(a)], offsets_[static_cast<std::size_t>(b) + 1]};
  }

  void rebuild() {
    const BitVector mask = domain_.mask();
    const auto& mw = mask.words();
    const auto& sw = shift_.words();
    std::vector<std::uint32_t> sizes(support_.size());
    for (std::size_t k = 0; k < support_.size(); ++k) {
      const auto& pw = (*base_)[support_[k]].words();
      std::size_t c = 0;
      for (std::size_t j = 0; j < mw.size(); ++j) c += std::popcount((pw[j] ^ sw[j]) & mw[j]);
      sizes[k] = static_cast<std::uint32_t>(c);
    }
    work_ = support_.size() * mw.size();
    offsets_.assign(dim() + 2, 0);
    for (auto s : sizes) ++offsets_[s + 1];
    for (std::size_t s = 1; s < offsets_.size(); ++s) offsets_[s] += offsets_[s - 1];
    by_size_.assign(support_.size(), 0);
    auto fill = offsets_;
    for (std::size_t k = 0; k < support_.size(); ++k) by_size_[fill[sizes[k]]++] = support_[k];
  }

  const Dataset* base_ = nullptr;
  CoordDomain domain_;
  std::vector<std::uint32_t> support_;
  BitVector shift_;
  // Support indices ordered by projected popcount; offsets_[s] is the first with size >= s.
  std::vector<std::uint32_t> by_size_;
  std::vector<std::size_t> offsets_;
  std::uint64_t work_ = 0;
};

}  // namespace pmatch
