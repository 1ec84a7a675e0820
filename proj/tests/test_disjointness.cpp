#include <cmath>

#include "catch_amalgamated.hpp"
#include "pmatch/bench.hpp"

using namespace pmatch;

namespace {

struct Pair {
  Dataset A, B;
};

Pair product(std::size_t d, std::uint64_t seed, std::size_t n = 400) {
  return {gen_uniform(n, d, 0.4, seed), gen_uniform(n, d, bob_density(d, 0.4), seed + 1)};
}

}  // namespace

TEST_CASE("derived sizes and ceilings") {
  StdParams p;
  p.d = 64;
  p.eps = 0.2;
  const auto D = derive_std(p);
  // ceil(sqrt(64 / log2 5)) = ceil(5.2...) = 6.
  CHECK(D.ell == 6);
  CHECK(D.small == 11);
  CHECK(D.h == 3);
  CHECK(D.t == 479);
  CHECK(D.a_max == Catch::Approx(6 + 11 * std::log2(3 * std::exp(1.0) * 6)));
  CHECK(D.b_max == Catch::Approx(12 * std::log2(16 * 6 / 0.2)));
  p.eps = 0.5;
  CHECK_THROWS_AS(derive_std(p), usage_error);
}

TEST_CASE("a shared singleton is always reported intersecting") {
  const std::size_t d = 32;
  const auto [A, B] = product(d, 1);
  const EmpiricalDistribution lam(A), rho(B);
  StdParams p;
  p.d = d;
  BitVector x(d), y(d);
  x.set(7);
  y.set(7);
  for (std::uint64_t s = 0; s < 200; ++s) REQUIRE(run_std(lam, rho, x, y, s, p).intersecting == 1);
}

TEST_CASE("intersecting verdicts are never wrong and bits stay under the ceilings") {
  for (std::size_t d : {16, 32, 64}) {
    const auto [A, B] = product(d, 2 + d);
    const EmpiricalDistribution lam(A), rho(B);
    StdParams p;
    p.d = d;
    const auto D = derive_std(p);
    InstanceRng rng(d);
    std::uint64_t errors = 0;
    const std::uint64_t n = 2000;
    for (std::uint64_t k = 0; k < n; ++k) {
      const auto& x = A[rng.below(A.size())];
      const auto& y = B[rng.below(B.size())];
      const auto r = run_std(lam, rho, x, y, k, p);
      REQUIRE(static_cast<double>(r.a) <= D.a_max);
      REQUIRE(static_cast<double>(r.b) <= D.b_max);
      REQUIRE(r.a == r.transcript.c_a());
      REQUIRE(r.b == r.transcript.c_b());
      if (r.intersecting == 1) REQUIRE(x.intersects(y));
      errors += r.intersecting != (x.intersects(y) ? 1 : 0) ? 1 : 0;
    }
    CHECK(static_cast<double>(errors) / n <= p.eps + 3 * std::sqrt(p.eps * (1 - p.eps) / n));
  }
}

TEST_CASE("error over the product distribution at d = 64") {
  const auto [A, B] = product(64, 40, 1000);
  const EmpiricalDistribution lam(A), rho(B);
  StdParams p;
  p.d = 64;
  std::uint64_t errors = 0;
  const std::uint64_t n = 3000;
  const double rate = std_error_rate(lam, rho, p, 77, n, 5, &errors);
  CHECK(rate == static_cast<double>(errors) / n);
  CHECK(rate <= 0.2 + 3 * std::sqrt(0.2 * 0.8 / n));
}

TEST_CASE("randomness fixing") {
  const auto [A, B] = product(32, 50);
  const EmpiricalDistribution lam(A), rho(B);
  StdParams p;
  p.d = 32;
  const auto one = fix_randomness(lam, rho, p, {1234}, 200);
  CHECK(one.seed == 1234);
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < 16; ++s) seeds.push_back(900 + s);
  const auto f = fix_randomness(lam, rho, p, seeds, 500);
  double mean = 0, lo = 1;
  for (double e : f.selection_error) {
    mean += e;
    lo = std::min(lo, e);
  }
  mean /= static_cast<double>(seeds.size());
  CHECK(lo <= mean);
  const auto pos = std::find(seeds.begin(), seeds.end(), f.seed) - seeds.begin();
  CHECK(f.selection_error[static_cast<std::size_t>(pos)] == lo);
  CHECK(f.heldout.mean <= 2 * p.eps + 3 * f.heldout.stderr_);
  CHECK_THROWS_AS(fix_randomness(lam, rho, p, {}, 10), usage_error);
}

TEST_CASE("exact disjointness probability") {
  CHECK(disjoint_probability_exact(4, 1, 1) == Catch::Approx(0.75));
  CHECK(disjoint_probability_exact(10, 0, 4) == 1.0);
  CHECK(disjoint_probability_exact(5, 3, 3) == 0.0);
  // C(295, 10) / C(300, 10), evaluated independently.
  CHECK(disjoint_probability_exact(300, 5, 10) == Catch::Approx(0.8431005852657443));
}

TEST_CASE("Monte-Carlo disjointness check under its hypotheses") {
  // eps must lie in (0, 1/2); e^(-1/2) is about 0.61.
  CHECK_THROWS_AS(disjoint_probability_check(4, 1, 1, 0.5), usage_error);
  CHECK_THROWS_AS(disjoint_probability_check(300, 5, 10, std::exp(-0.5)), usage_error);
  // k*l = 1 is not below 4 ln(1/0.49) / 3, about 0.95.
  CHECK_THROWS_AS(disjoint_probability_check(4, 1, 1, 0.49), usage_error);
  // k*l = 50 is not below 30 ln(10) / 3, about 23.
  CHECK_THROWS_AS(disjoint_probability_check(30, 5, 10, 0.1), usage_error);
  CHECK(disjoint_probability_check(300, 5, 10, 0.4));
  CHECK(disjoint_probability_check(300, 0, 10, 0.4));
}
