#include "catch_amalgamated.hpp"
#include "pmatch/subset_rank.hpp"

using namespace pmatch;

namespace {

// Subsets of y with at most zmax elements, by size and then lexicographically
// on positions: the reference order for ranks.
std::vector<BitVector> enumerate(const BitVector& y, std::size_t zmax) {
  const auto pos = y.indices();
  std::vector<BitVector> out;
  for (std::size_t k = 0; k <= std::min(zmax, pos.size()); ++k) {
    std::vector<bool> pick(pos.size(), false);
    std::fill(pick.begin(), pick.begin() + static_cast<long>(k), true);
    do {
      BitVector s(y.dim());
      for (std::size_t i = 0; i < pos.size(); ++i)
        if (pick[i]) s.set(pos[i]);
      out.push_back(s);
    } while (std::prev_permutation(pick.begin(), pick.end()));
  }
  return out;
}

}  // namespace

TEST_CASE("binomials and subset counts") {
  CHECK(binom(5, 2) == 10);
  CHECK(binom(5, 6) == 0);
  CHECK(binom(0, 0) == 1);
  CHECK(subset_count(4, 2) == 11);
  CHECK(subset_count(3, 2) == 7);
  CHECK(subset_count(3, 9) == 8);
  CHECK(binom(120, 60) > static_cast<u128>(1) << 100);
}

TEST_CASE("empty set has rank zero") {
  const auto y = BitVector::parse("0111");
  CHECK(rank_subset(y, BitVector(4), 2) == 0);
  CHECK(unrank_subset(y, 0, 2) == BitVector(4));
}

TEST_CASE("rank of a singleton in a three-element set") {
  // {1,2,3} with zmax 2: {}, {1}, {2}, {3}, {1,2}, {1,3}, {2,3}.
  CHECK(rank_subset(BitVector::parse("0111"), BitVector::parse("0010"), 2) == 2);
  CHECK(rank_subset(BitVector::parse("0111"), BitVector::parse("0101"), 2) == 5);
}

TEST_CASE("ranks follow the reference enumeration") {
  for (const char* ys : {"1", "101101", "011011011", "1111111"}) {
    const auto y = BitVector::parse(ys);
    for (std::size_t z = 0; z <= y.popcount(); ++z) {
      const auto all = enumerate(y, z);
      REQUIRE(all.size() == static_cast<std::size_t>(subset_count(y.popcount(), z)));
      for (std::size_t r = 0; r < all.size(); ++r) {
        REQUIRE(rank_subset(y, all[r], z) == r);
        REQUIRE(unrank_subset(y, r, z) == all[r]);
      }
      CHECK(unrank_subset(y, static_cast<u128>(all.size()), z) == std::nullopt);
    }
  }
}

TEST_CASE("round trip over every subset of a six-element set") {
  const auto y = BitVector::parse("11011101");
  const auto pos = y.indices();
  REQUIRE(pos.size() == 6);
  for (std::uint32_t m = 0; m < 64; ++m) {
    BitVector s(8);
    for (std::size_t i = 0; i < 6; ++i)
      if ((m >> i) & 1U) s.set(pos[i]);
    if (s.popcount() > 3) {
      CHECK_THROWS(rank_subset(y, s, 3));
      continue;
    }
    REQUIRE(unrank_subset(y, rank_subset(y, s, 3), 3) == s);
  }
}

TEST_CASE("rank rejects sets outside y") {
  CHECK_THROWS(rank_subset(BitVector::parse("0110"), BitVector::parse("1000"), 2));
}
