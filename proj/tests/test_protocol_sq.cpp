#include <cmath>

#include "catch_amalgamated.hpp"
#include "pmatch/instances.hpp"
#include "pmatch/protocol_sq.hpp"

using namespace pmatch;

namespace {

Overrides recursive() {
  Overrides ov;
  ov.base_coeff = 1;
  ov.t_cap = 8;
  return ov;
}

bool has_label(const Transcript& tr, const std::string& label) {
  for (const auto& m : tr.messages())
    if (m.label == label) return true;
  return false;
}

BitVector superset_of(InstanceRng& rng, const BitVector& x, std::size_t size) {
  BitVector y = x;
  while (y.popcount() < size) y.set(rng.below(x.dim()));
  return y;
}

}  // namespace

TEST_CASE("subset pairs with special advice always accept") {
  const Dataset ds = gen_uniform(128, 48, 0.2, 1);
  const EmpiricalDistribution lam(ds);
  const SqConfig c{16, 0.25, 0.05, recursive()};
  REQUIRE_FALSE(derive_sq(16, 0.25, 0.05, c.ov).base_case);
  InstanceRng rng(2);
  int recursed = 0;
  for (int k = 0; k < 400; ++k) {
    const BitVector& x = ds[rng.below(ds.size())];
    if (x.popcount() > 16) continue;
    const BitVector y = superset_of(rng, x, 16);
    const std::uint64_t s = rng.below(1U << 30);
    const auto r = run_sq(c, lam, x, y, sq_special_advice(c, lam, x, y, s), s);
    REQUIRE(r.output() == 1);
    recursed += has_label(r.transcript, "cert") || has_label(r.transcript, "j*") ? 1 : 0;
  }
  CHECK(recursed > 0);
}

TEST_CASE("a certificate hit rejects") {
  // lambda holds one 12-element X; y keeps 11 of them, so X \ y is a single
  // coordinate that x = X contains.
  const std::size_t d = 32;
  BitVector X(d);
  for (std::size_t i = 0; i < 12; ++i) X.set(i);
  BitVector y = X;
  y.set(11, false);
  for (std::size_t i = 20; i < 25; ++i) y.set(i);
  REQUIRE(y.popcount() == 16);
  Dataset ds(d);
  ds.push_back(X);
  const EmpiricalDistribution lam(ds);
  const SqConfig c{16, 0.25, 0.05, recursive()};
  const auto r = run_sq(c, lam, X, y, {}, 3);
  CHECK(r.output() == 0);
  bool saw = false;
  for (const auto& m : r.transcript.messages())
    if (m.label == "cert-check") saw = m.payload == tag_bits(Tag::OUT0);
  CHECK(saw);
}

TEST_CASE("too-large x rejects with empty advice") {
  const Dataset ds = gen_uniform(16, 32, 0.5, 3);
  const EmpiricalDistribution lam(ds);
  const SqConfig c{8, 0.25, 0.05, recursive()};
  const BitVector x = BitVector::ones(32);
  BitVector y(32);
  for (std::size_t i = 0; i < 8; ++i) y.set(i);
  CHECK(sq_special_advice(c, lam, x, y, 4).empty());
  CHECK(run_sq(c, lam, x, y, {}, 4).output() == 0);
}

TEST_CASE("base-case advice is the base protocol's advice") {
  const Dataset ds = gen_uniform(16, 32, 0.2, 5);
  const EmpiricalDistribution lam(ds);
  const SqConfig c{8, 0.25, 0.05, {}};
  REQUIRE(derive_sq(8, 0.25, 0.05).base_case);
  InstanceRng rng(6);
  for (int k = 0; k < 20; ++k) {
    const BitVector& x = ds[rng.below(ds.size())];
    if (x.popcount() > 8) continue;
    const BitVector y = superset_of(rng, x, 8);
    REQUIRE(sq_special_advice(c, lam, x, y, 9) == special_advice_sq(x, y, 8, 8));
  }
}

TEST_CASE("special advice is a function of the public seed") {
  const Dataset ds = gen_uniform(64, 40, 0.2, 7);
  const EmpiricalDistribution lam(ds);
  const SqConfig c{16, 0.25, 0.05, recursive()};
  InstanceRng rng(8);
  for (int k = 0; k < 30; ++k) {
    const BitVector& x = ds[rng.below(ds.size())];
    if (x.popcount() > 16) continue;
    const BitVector y = superset_of(rng, x, 16);
    REQUIRE(sq_special_advice(c, lam, x, y, 100 + k) == sq_special_advice(c, lam, x, y, 100 + k));
  }
}

TEST_CASE("false-positive rate on sparse data stays near eps + delta") {
  // 64 random 16-sparse points in d = 128, w = 16.
  const std::size_t d = 128, m = 64;
  InstanceRng rng(9);
  Dataset ds(d);
  for (std::size_t i = 0; i < m; ++i) {
    BitVector p(d);
    for (auto k : rng.choose(d, 16)) p.set(k);
    ds.push_back(std::move(p));
  }
  const EmpiricalDistribution lam(ds);
  const SqConfig c{16, 0.25, 0.01, recursive()};
  std::uint64_t accepts = 0, trials = 0;
  for (int q = 0; q < 30; ++q) {
    // Half of a stored point plus random fill, so some samples are near.
    BitVector y(d);
    const auto& src = ds[rng.below(m)];
    const auto idx = src.indices();
    for (std::size_t i = 0; i < idx.size() / 2; ++i) y.set(idx[i]);
    while (y.popcount() < 16) y.set(rng.below(d));
    const std::uint64_t s = 1000 + static_cast<std::uint64_t>(q);
    for (std::uint32_t i = 0; i < m; ++i) {
      if (subset_of(ds[i], y)) continue;
      ++trials;
      accepts += run_sq(c, lam, ds[i], y, sq_special_advice(c, lam, ds[i], y, s), s).output() == 1 ? 1 : 0;
    }
  }
  const Estimate e = make_estimate(accepts, trials);
  const double p = c.eps + c.delta;
  CHECK(e.mean <= p + 3 * std::sqrt(p * (1 - p) / static_cast<double>(trials)));
}

TEST_CASE("sq inputs are validated") {
  const Dataset ds = gen_uniform(4, 8, 0.2, 1);
  const EmpiricalDistribution lam(ds);
  const SqConfig c{2, 0.25, 0.05, {}};
  CHECK_THROWS_AS(run_sq(c, lam, BitVector(8), BitVector::ones(8), {}, 1), usage_error);
  CHECK_THROWS_AS(run_sq(c, lam, BitVector(7), BitVector(8), {}, 1), usage_error);
  const SqConfig bad{2, 0.6, 0.05, {}};
  CHECK_THROWS_AS(run_sq(bad, lam, BitVector(8), BitVector(8), {}, 1), usage_error);
}
