#include <cmath>

#include "catch_amalgamated.hpp"
#include "pmatch/transcript.hpp"

using namespace pmatch;
using Catch::Approx;

TEST_CASE("per-player bit totals") {
  Transcript tr;
  tr.append(Player::ALICE, BitString::from_uint(0, 5), "a");
  CHECK(tr.c_a() == 5);
  tr.append(Player::BOB, BitString::from_uint(1, 3), "b1");
  tr.append(Player::BOB, BitString::from_uint(2, 4), "b2");
  CHECK(tr.c_b() == 7);
  tr.append(Player::MERLIN, BitString::parse("101"), "m");
  tr.append(Player::CAROL_PUB, BitString::parse("11"), "c");
  tr.append(Player::CAROL_PRI, BitString::parse("1"), "c");
  CHECK(tr.c_m() == 3);
  CHECK(tr.c_c() == 3);
  CHECK_FALSE(tr.finished());
  tr.finalize(1);
  CHECK(tr.output() == 1);
  CHECK_THROWS_AS(tr.append(Player::ALICE, BitString::parse("1"), "late"), usage_error);
  CHECK_THROWS_AS(tr.finalize(0), usage_error);
}

TEST_CASE("transcript dump is stable text") {
  Transcript tr;
  tr.append(Player::ALICE, tag_bits(Tag::BIG), "status");
  tr.append(Player::BOB, BitString::parse("10100001"), "idx");
  tr.finalize(0);
  const auto text = tr.dump();
  CHECK(text.find("status") != std::string::npos);
  CHECK(text.rfind("OUTPUT 0\n") == text.size() - 9);
}

TEST_CASE("bit strings") {
  const auto b = BitString::from_uint(0b1011, 6);
  CHECK(b.to_string() == "001011");
  CHECK(read_uint(b) == 11);
  BitString c;
  c.append_u128(static_cast<unsigned __int128>(1) << 100, 101);
  CHECK(c.size() == 101);
  CHECK(read_u128(c) == static_cast<unsigned __int128>(1) << 100);
  CHECK(BitString::from_bits(BitVector::parse("0110")).to_bitvector() == BitVector::parse("0110"));
  CHECK(b.slice(2, 4).to_string() == "1011");

  BitReader r(b);
  CHECK(r.take(2)->to_string() == "00");
  CHECK(r.take(5) == std::nullopt);
  CHECK(r.remaining() == 0);
}

TEST_CASE("width_for counts values in [0, n)") {
  CHECK(width_for(1) == 0);
  CHECK(width_for(2) == 1);
  CHECK(width_for(5) == 3);
  CHECK(width_for(8) == 3);
  CHECK(width_for(9) == 4);
  CHECK(width_for_u128(static_cast<unsigned __int128>(1) << 90) == 90);
}

TEST_CASE("random tape draws are a pure function of position") {
  RandomTape a(42, Stream::PUB), b(42, Stream::PUB), pri(42, Stream::PRI);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    REQUIRE(x == b.next());
    REQUIRE(x == RandomTape::draw_at(42, Stream::PUB, static_cast<std::uint64_t>(i)));
  }
  CHECK(pri.next() != RandomTape::draw_at(42, Stream::PUB, 0));
  RandomTape u(3, Stream::PUB);
  for (int i = 0; i < 1000; ++i) REQUIRE(u.uniform(7) < 7);
  CHECK(u.bits(70).dim() == 70);
}

TEST_CASE("uniform draws are unbiased over a small range") {
  RandomTape t(9, Stream::PUB);
  std::array<int, 4> counts{};
  const int n = 40000;
  for (int i = 0; i < n; ++i) ++counts[t.uniform(4)];
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  for (int c : counts) CHECK(std::fabs(c - n / 4.0) <= 4 * sigma);
}

TEST_CASE("subset-query parameters follow the closed forms") {
  // Values from an independent evaluation of the same formulas.
  const auto p = derive_params(128, 64, 0.05, 0.01);
  CHECK(p.ell == Approx(2.490058626375396).epsilon(1e-12));
  CHECK(p.eps_p == Approx(0.0010039924255273761).epsilon(1e-12));
  CHECK(p.delta_p == Approx(0.001));
  CHECK(p.h == 10);
  CHECK(p.iter_cap == 5);
  const double tu = (10.0 / p.eps_p) * std::log2(1.0 / p.eps_p);
  CHECK(p.t_uncapped == static_cast<std::uint64_t>(std::ceil(tu)));
  CHECK(p.base_case);  // 64 <= 100 log2(1280)
}

TEST_CASE("base case is forced for tiny w") {
  CHECK(derive_sq(1, 0.25, 0.1).base_case);
  CHECK(derive_sq(0.5, 0.25, 0.1).base_case);
  Overrides ov;
  ov.base_coeff = 1;
  CHECK_FALSE(derive_sq(64, 0.25, 0.1, ov).base_case);
}

TEST_CASE("overrides replace derived values") {
  Overrides ov;
  ov.base_coeff = 1;
  ov.t_cap = 8;
  ov.h = 3;
  ov.iter_cap = 2;
  ov.base_rounds = 6;
  const auto p = derive_sq(64, 0.25, 0.1, ov);
  CHECK(p.t == 8);
  CHECK(p.t_uncapped > 8);
  CHECK(p.h == 3);
  CHECK(p.iter_cap == 2);
  CHECK(p.base_rounds == 6);
  const auto q = derive_pm(64, 0.25, 0.1, ov);
  CHECK(q.t == 8);
  CHECK(q.t_uncapped == 2129);
}

TEST_CASE("the size ratio never drops below one") {
  Overrides ov;
  ov.base_coeff = 0.1;
  CHECK(derive_sq(2, 0.25, 0.1, ov).ell == 1.0);
  ov.ell = 0.5;
  CHECK(derive_sq(40, 0.25, 0.1, ov).ell == 1.0);
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(derive_params(16, 4, 0.5, 0.1), usage_error);
  CHECK_THROWS_AS(derive_params(16, 4, 0.1, 0.2), usage_error);
  CHECK_THROWS_AS(derive_params(16, 4, 0.1, 0.0), usage_error);
  CHECK_THROWS_AS(derive_params(16, 17, 0.1, 0.1), usage_error);
  CHECK_NOTHROW(derive_params(16, 16, 0.1, 0.1));
}
