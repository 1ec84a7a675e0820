#include <cmath>
#include <filesystem>

#include "catch_amalgamated.hpp"
#include "pmatch/ds_compiler.hpp"
#include "pmatch/instances.hpp"

using namespace pmatch;

namespace {

CompileParams small_pm(double w = 8) {
  CompileParams cp;
  cp.protocol = ProtocolKind::PM;
  cp.w = w;
  cp.eps = 0.25;
  cp.delta = 0.05;
  cp.ov.base_coeff = 1;
  cp.ov.t_cap = 4;
  return cp;
}

CompileParams small_sq(double w = 6) {
  CompileParams cp = small_pm(w);
  cp.protocol = ProtocolKind::SQ;
  cp.ov.t_cap = 3;
  cp.ov.h = 2;
  return cp;
}

}  // namespace

TEST_CASE("single-point dataset") {
  Dataset ds(12);
  ds.push_back(BitVector::parse("101100111000"));
  for (const auto& cp : {small_pm(6), desk_preset(ProtocolKind::PM, 6)}) {
    const auto tree = preprocess(ds, cp, 3);
    for (const auto& leaf : tree.leaves)
      for (const auto& g : leaf)
        for (auto i : g.members) REQUIRE(i == 0);
    InstanceRng rng(4);
    for (int q = 0; q < 50; ++q) {
      const auto y = q % 2 ? random_pattern(rng, 12, 6) : [&] {
        TernaryPattern p = TernaryPattern::exact(ds[0]);
        for (auto k : rng.choose(12, 6)) p.set(k, Symbol::STAR);
        return p;
      }();
      const auto r = query(tree, ds, y);
      REQUIRE(r.matches == brute_force_pm(ds, y));
    }
  }
}

TEST_CASE("all-star query returns every index") {
  const Dataset ds = gen_uniform(64, 8, 0.5, 1);
  const auto tree = preprocess(ds, desk_preset(ProtocolKind::PM, 8), 2);
  TernaryPattern y(8);
  for (std::size_t k = 0; k < 8; ++k) y.set(k, Symbol::STAR);
  const auto r = query(tree, ds, y);
  CHECK(r.matches.size() == 64);
}

TEST_CASE("partial-match tree agrees with brute force") {
  const auto ins = gen_planted(200, 24, 8, 60, 5);
  const auto tree = preprocess(ins.dataset, small_pm(8), 6);
  for (std::size_t q = 0; q < ins.pm_queries.size(); ++q) {
    const auto r = query(tree, ins.dataset, ins.pm_queries[q]);
    REQUIRE(r.matches == ins.truth[q]);
    REQUIRE(std::binary_search(r.matches.begin(), r.matches.end(), ins.planted[q]));
  }
  InstanceRng rng(7);
  for (int q = 0; q < 60; ++q) {
    const auto y = random_pattern(rng, 24, 8);
    REQUIRE(query(tree, ins.dataset, y).matches == brute_force_pm(ins.dataset, y));
  }
}

TEST_CASE("subset tree agrees with brute force") {
  const Dataset ds = gen_uniform(40, 16, 0.2, 8);
  const auto tree = preprocess(ds, small_sq(6), 9);
  InstanceRng rng(10);
  for (int q = 0; q < 80; ++q) {
    BitVector y(16);
    if (q % 2) {
      y = ds[rng.below(ds.size())];
      if (y.popcount() > 6) continue;
    }
    while (y.popcount() < 6) y.set(rng.below(16));
    REQUIRE(query(tree, ds, y).matches == brute_force_sq(ds, y));
  }
}

TEST_CASE("candidates are exactly the points whose run accepts") {
  const Dataset ds = gen_uniform(96, 20, 0.5, 11);
  const CompileParams cp = small_pm(8);
  const std::uint64_t seed = 12;
  const auto tree = preprocess(ds, cp, seed);
  const EmpiricalDistribution lam(ds);
  const PmConfig pc{cp.w, cp.eps, cp.delta, cp.ov};
  InstanceRng rng(13);
  for (int q = 0; q < 25; ++q) {
    const auto y = random_pattern(rng, 20, 8);
    std::vector<std::uint32_t> accepted;
    for (std::uint32_t i = 0; i < ds.size(); ++i)
      if (run_pm(pc, lam, ds[i], y, pm_special_advice(pc, lam, ds[i], y, seed), seed).output() == 1)
        accepted.push_back(i);
    auto cands = query(tree, ds, y).candidates;
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
    REQUIRE(cands == accepted);
  }
}

TEST_CASE("subset candidates are exactly the points whose run accepts") {
  const Dataset ds = gen_uniform(40, 16, 0.2, 14);
  const CompileParams cp = small_sq(6);
  const std::uint64_t seed = 15;
  const auto tree = preprocess(ds, cp, seed);
  const EmpiricalDistribution lam(ds);
  const SqConfig sc{cp.w, cp.eps, cp.delta, cp.ov};
  InstanceRng rng(16);
  for (int q = 0; q < 25; ++q) {
    BitVector y(16);
    while (y.popcount() < 6) y.set(rng.below(16));
    std::vector<std::uint32_t> accepted;
    for (std::uint32_t i = 0; i < ds.size(); ++i)
      if (run_sq(sc, lam, ds[i], y, sq_special_advice(sc, lam, ds[i], y, seed), seed).output() == 1)
        accepted.push_back(i);
    auto cands = query(tree, ds, y).candidates;
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
    REQUIRE(cands == accepted);
  }
}

TEST_CASE("leaf count is bounded by the path bits") {
  const Dataset ds = gen_uniform(8, 8, 0.3, 17);
  const auto tree = preprocess(ds, small_sq(4), 18);
  REQUIRE(tree.meta.max_path_bits < 63);
  CHECK(tree.meta.leaf_count <= (std::uint64_t{1} << tree.meta.max_path_bits));
  CHECK(tree.meta.leaf_count == tree.leaves.size());
}

TEST_CASE("space accounting matches the stored arrays") {
  const Dataset ds = gen_uniform(120, 24, 0.5, 19);
  const auto tree = preprocess(ds, small_pm(8), 20);
  std::uint64_t stored = 0, payload = 0;
  for (const auto& leaf : tree.leaves)
    for (const auto& g : leaf) stored += g.members.size();
  for (const auto& p : tree.payloads) payload += p.size();
  CHECK(tree.meta.stored_candidates == stored);
  CHECK(tree.meta.carol_payload_bits == payload);
  CHECK(tree.meta.node_count == tree.nodes.size());
}

TEST_CASE("equal seeds give byte-identical trees") {
  const Dataset ds = gen_uniform(150, 24, 0.5, 21);
  const auto a = preprocess(ds, small_pm(8), 22).serialize();
  const auto b = preprocess(ds, small_pm(8), 22).serialize();
  CHECK(a == b);
  CHECK(preprocess(ds, small_pm(8), 23).serialize() != a);
  CHECK(ProtocolTree::deserialize(a).serialize() == a);
}

TEST_CASE("tree files round trip and reject corruption") {
  const Dataset ds = gen_uniform(50, 16, 0.5, 24);
  const auto tree = preprocess(ds, small_pm(6), 25);
  const auto path = (std::filesystem::temp_directory_path() / "pmatch_tree_test.bin").string();
  tree.save(path);
  const auto back = ProtocolTree::load(path);
  std::filesystem::remove(path);
  CHECK(back.serialize() == tree.serialize());
  auto bytes = tree.serialize();
  bytes[0] ^= 0xff;
  CHECK_THROWS(ProtocolTree::deserialize(bytes));
  bytes = tree.serialize();
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS(ProtocolTree::deserialize(bytes));
}

TEST_CASE("queries check the dataset and the pattern") {
  const Dataset ds = gen_uniform(20, 16, 0.5, 26);
  const auto tree = preprocess(ds, small_pm(6), 27);
  const Dataset other = gen_uniform(20, 16, 0.5, 28);
  CHECK_THROWS_AS(query(tree, other, TernaryPattern(16)), usage_error);
  CHECK_THROWS_AS(query(tree, ds, TernaryPattern(15)), usage_error);
  TernaryPattern many(16);
  for (std::size_t k = 0; k < 7; ++k) many.set(k, Symbol::STAR);
  CHECK_THROWS_AS(query(tree, ds, many), usage_error);
  CHECK_THROWS_AS(query(tree, ds, BitVector(16)), usage_error);
}

TEST_CASE("node ceiling aborts oversized builds") {
  const Dataset ds = gen_uniform(200, 24, 0.5, 29);
  BuildOptions opt;
  opt.node_ceiling = 50;
  CHECK_THROWS_AS(preprocess(ds, small_pm(8), 30, opt), sizing_error);
}

TEST_CASE("non-matching queries scan few candidates") {
  const Dataset ds = gen_uniform(512, 64, 0.5, 31);
  const CompileParams cp = desk_preset(ProtocolKind::PM, 16);
  InstanceRng rng(32);
  double scanned = 0;
  int used = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto tree = preprocess(ds, cp, 100 + seed);
    for (int q = 0; q < 40; ++q) {
      const auto y = random_pattern(rng, 64, 16);
      const auto r = query(tree, ds, y);
      if (!r.matches.empty()) continue;
      scanned += static_cast<double>(r.candidates_scanned);
      ++used;
    }
  }
  REQUIRE(used > 0);
  CHECK(scanned / used <= cp.eps * 512);
}

TEST_CASE("wrong-advice branches only add candidates") {
  const Dataset ds = gen_uniform(80, 20, 0.5, 33);
  const auto tree = preprocess(ds, small_pm(8), 34);
  InstanceRng rng(35);
  QueryOptions all;
  all.all_present_advice = true;
  for (int q = 0; q < 20; ++q) {
    const auto y = random_pattern(rng, 20, 8);
    const auto a = query(tree, ds, y);
    const auto b = query(tree, ds, y, all);
    REQUIRE(a.matches == b.matches);
    REQUIRE(b.candidates_scanned >= a.candidates_scanned);
    REQUIRE(std::includes(b.candidates.begin(), b.candidates.end(), a.candidates.begin(), a.candidates.end()));
  }
}

TEST_CASE("paper parameters at n = 2^16, c = 4") {
  const auto p = paper_params(65536, 4);
  CHECK(p.w == 64);
  // n^(-1/100) with unit constants.
  CHECK(p.delta == Catch::Approx(0.8950250709279725).epsilon(1e-12));
  // log2(C1 C2) = 0 collapses the exponent's denominator.
  CHECK(p.degenerate);
  CHECK(p.eps == 0.0);
  const auto q = paper_params(65536, 4, 2, 2);
  CHECK_FALSE(q.degenerate);
  CHECK(q.eps_log2 == Catch::Approx(-9.765625e-13).epsilon(1e-9));
  CHECK(q.delta == Catch::Approx(0.9726549474122855).epsilon(1e-12));
}

TEST_CASE("desk preset stays inside its documented ranges") {
  const auto cp = desk_preset();
  CHECK(cp.eps >= 0.05);
  CHECK(cp.eps <= 0.5);
  CHECK(cp.delta >= 0.001);
  CHECK(cp.delta <= 0.1);
  CHECK(cp.ov.t_cap.has_value());
}
