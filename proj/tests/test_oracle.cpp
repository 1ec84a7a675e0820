#include <cmath>
#include <random>

#include "catch_amalgamated.hpp"
#include "pmatch/bench.hpp"

using namespace pmatch;

TEST_CASE("brute-force partial match") {
  Dataset ds(4);
  for (const char* r : {"1010", "1011", "0000", "1110"}) ds.push_back(BitVector::parse(r));
  CHECK(brute_force_pm(ds, TernaryPattern::parse("101*")) == std::vector<std::uint32_t>{0, 1});
  CHECK(brute_force_pm(ds, TernaryPattern::parse("****")) == std::vector<std::uint32_t>{0, 1, 2, 3});
  CHECK(brute_force_pm(ds, TernaryPattern::parse("0111")).empty());
  CHECK_THROWS_AS(brute_force_pm(ds, TernaryPattern::parse("***")), usage_error);
}

TEST_CASE("brute-force subset query") {
  Dataset ds(4);
  for (const char* r : {"0100", "0110", "1000", "0000"}) ds.push_back(BitVector::parse(r));
  CHECK(brute_force_sq(ds, BitVector::parse("0110")) == std::vector<std::uint32_t>{0, 1, 3});
  CHECK(brute_force_sq(ds, BitVector::parse("0000")) == std::vector<std::uint32_t>{3});
}

TEST_CASE("constant closure") {
  const auto e = accept_rate([](std::uint64_t) { return 1; }, 1000, 1);
  CHECK(e.mean == 1.0);
  CHECK(e.stderr_ == 0.0);
  CHECK(e.within(1.0));
}

TEST_CASE("fair coin closure") {
  const std::uint64_t n = 10000;
  const auto e = accept_rate([](std::uint64_t s) { return static_cast<int>(splitmix64(s) & 1U); }, n, 2);
  CHECK(std::fabs(e.mean - 0.5) <= 3 * std::sqrt(0.25 / n));
}

TEST_CASE("wrong-reconstruction closure at four rounds") {
  const auto x = BitVector::parse("110010");
  const auto ybar = BitVector::parse("010011");
  const std::uint64_t n = 100000;
  const auto e = base_wrong_rate(x, ybar, 4, n, 3);
  const double p = 1.0 / 16;
  CHECK(std::fabs(e.mean - p) <= 3 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("estimates") {
  const auto e = make_estimate(25, 100);
  CHECK(e.mean == 0.25);
  CHECK(e.stderr_ == Catch::Approx(std::sqrt(0.25 * 0.75 / 100)));
  CHECK(e.upper() > e.mean);
  CHECK(e.lower() < e.mean);
  CHECK_THROWS_AS(make_estimate(0, 0), usage_error);
}

TEST_CASE("planted instances carry their truth") {
  const auto ins = gen_planted(300, 32, 10, 25, 4);
  REQUIRE(ins.pm_queries.size() == 25);
  for (std::size_t q = 0; q < 25; ++q) {
    REQUIRE(ins.pm_queries[q].star_count() == 10);
    REQUIRE(ins.truth[q] == brute_force_pm(ins.dataset, ins.pm_queries[q]));
    REQUIRE(std::binary_search(ins.truth[q].begin(), ins.truth[q].end(), ins.planted[q]));
  }
  const auto again = gen_planted(300, 32, 10, 25, 4);
  CHECK(again.dataset.fingerprint() == ins.dataset.fingerprint());
  CHECK(again.truth == ins.truth);
}

TEST_CASE("uniform draws by rejection stay in range") {
  InstanceRng rng(5);
  std::array<int, 3> counts{};
  for (int i = 0; i < 30000; ++i) ++counts[rng.below(3)];
  for (int c : counts) CHECK(std::fabs(c - 10000.0) <= 4 * std::sqrt(30000 * (1.0 / 3) * (2.0 / 3)));
  const auto pick = rng.choose(10, 4);
  CHECK(pick.size() == 4);
  CHECK(std::is_sorted(pick.begin(), pick.end()));
  CHECK(std::adjacent_find(pick.begin(), pick.end()) == pick.end());
}

TEST_CASE("log-log slope recovers a power law") {
  const std::vector<double> xs = {256, 1024, 4096, 16384};
  std::vector<double> ys;
  for (double x : xs) ys.push_back(3.0 * std::pow(x, 0.6));
  CHECK(loglog_slope(xs, ys) == Catch::Approx(0.6).epsilon(1e-12));
  CHECK_THROWS_AS(loglog_slope({1}, {1}), usage_error);
  CHECK_THROWS_AS(loglog_slope({1, 2}, {0, 1}), usage_error);
}
