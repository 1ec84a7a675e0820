#pragma once

// Experiment runners shared by the CLI and the acceptance binary. Each
// returns a Report whose checks record pass/fail against pinned bounds.

#include <chrono>
#include <fstream>
#include <sstream>

#include "disjointness.hpp"
#include "ds_compiler.hpp"
#include "instances.hpp"
#include "report.hpp"

namespace pmatch {

using ojson = nlohmann::ordered_json;

inline ojson overrides_json(const Overrides& ov) {
  ojson j;
  j["base_coeff"] = ov.base_coeff;
  if (ov.t_cap) j["t_cap"] = *ov.t_cap;
  if (ov.ell) j["ell"] = *ov.ell;
  if (ov.t) j["t"] = *ov.t;
  if (ov.h) j["h"] = *ov.h;
  if (ov.halving) j["halving"] = *ov.halving;
  if (ov.iter_cap) j["iter_cap"] = *ov.iter_cap;
  if (ov.base_rounds) j["base_rounds"] = *ov.base_rounds;
  return j;
}

inline ojson compile_params_json(const CompileParams& cp) {
  return {{"protocol", cp.protocol == ProtocolKind::PM ? "pm" : "sq"},
          {"w", cp.w},
          {"eps", cp.eps},
          {"delta", cp.delta},
          {"overrides", overrides_json(cp.ov)}};
}

inline void set_check(Report& r, const std::string& name, bool pass, double value, double bound,
                      const std::string& relation = "<=") {
  r.checks[name] = {{"pass", pass}, {"value", value}, {"bound", bound}, {"relation", relation}};
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Pattern built from a dataset point: `stars` wildcards, then one non-star
// coordinate flipped so the source point no longer matches.
inline TernaryPattern near_miss_pattern(InstanceRng& rng, const BitVector& src, std::size_t stars) {
  const std::size_t d = src.dim();
  TernaryPattern y = TernaryPattern::exact(src);
  const auto picked = rng.choose(d, std::min(d, stars + 1));
  for (std::size_t k = 0; k + 1 < picked.size(); ++k) y.set(picked[k], Symbol::STAR);
  if (picked.size() == stars + 1) {
    const auto flip = picked.back();
    y.set(flip, src.get(flip) ? Symbol::ZERO : Symbol::ONE);
  }
  return y;
}

// ---------------------------------------------------------------------------
// Exactness of the compiled data structure on planted instances
// ---------------------------------------------------------------------------

struct ExactnessConfig {
  std::size_t instances = 50;
  std::size_t n = 1024;
  std::size_t d = 64;
  std::vector<std::size_t> ws = {8, 16, 32};
  std::size_t queries_per_instance = 40;
  std::uint64_t seed = 1;
};

inline Report run_exactness(const ExactnessConfig& c) {
  Report r;
  r.experiment = "exactness";
  r.params = {{"instances", c.instances}, {"n", c.n}, {"d", c.d}, {"ws", c.ws},
              {"queries_per_instance", c.queries_per_instance}, {"seed", c.seed},
              {"compile", compile_params_json(desk_preset())}};
  std::uint64_t total = 0, ok = 0;
  for (std::size_t i = 0; i < c.instances; ++i) {
    const std::size_t w = c.ws[i % c.ws.size()];
    const std::uint64_t iseed = c.seed * 1000003 + i;
    const Instance ins = gen_planted(c.n, c.d, w, c.queries_per_instance, iseed);
    const ProtocolTree tree = preprocess(ins.dataset, desk_preset(ProtocolKind::PM, static_cast<double>(w)), iseed);
    for (std::size_t q = 0; q < ins.pm_queries.size(); ++q) {
      const QueryReport qr = query(tree, ins.dataset, ins.pm_queries[q]);
      const bool good = qr.matches == ins.truth[q];
      ++total;
      ok += good ? 1 : 0;
      r.add_row({{"instance", i}, {"instance_seed", iseed}, {"w", w}, {"query", q},
                 {"expected", ins.truth[q].size()}, {"matched", qr.matches.size()},
                 {"scanned", qr.candidates_scanned}, {"leaves_visited", qr.leaves_visited},
                 {"tree_nodes", tree.meta.node_count}, {"ok", good}});
    }
  }
  r.aggregate("scanned");
  r.aggregate("leaves_visited");
  set_check(r, "all_queries_exact", ok == total, static_cast<double>(total - ok), 0.0);
  set_check(r, "query_count", total >= 2000, static_cast<double>(total), 2000.0, ">=");
  return r;
}

// ---------------------------------------------------------------------------
// Base protocol parity rate
// ---------------------------------------------------------------------------

// Accept rate of the base protocol when Bob reconstructs ybar != x. The
// pattern is all stars, so the advice is ybar itself.
inline Estimate base_wrong_rate(const BitVector& x, const BitVector& ybar, std::uint64_t rounds, std::uint64_t trials,
                                std::uint64_t seed) {
  TernaryPattern all_star(x.dim());
  for (std::size_t k = 0; k < x.dim(); ++k) all_star.set(k, Symbol::STAR);
  Overrides ov;
  ov.base_rounds = rounds;
  const BitString advice = BitString::from_bits(ybar);
  const BaseCall call{BaseMode::PM, static_cast<double>(x.dim()), static_cast<double>(x.dim()), 0.5};
  return accept_rate([&](std::uint64_t s) { return run_base(call, x, all_star, advice, s, ov).output(); }, trials,
                     seed);
}

struct BaseRateConfig {
  std::vector<std::uint64_t> ts = {1, 2, 3, 4, 5, 6, 7, 8};
  std::size_t pairs = 10;
  std::size_t d = 16;
  std::uint64_t trials = 100000;
  std::uint64_t seed = 2;
};

inline Report run_base_rate(const BaseRateConfig& c) {
  Report r;
  r.experiment = "base-rate";
  r.params = {{"ts", c.ts}, {"pairs", c.pairs}, {"d", c.d}, {"trials", c.trials}, {"seed", c.seed}};
  InstanceRng rng(c.seed);
  std::vector<std::pair<BitVector, BitVector>> pairs;
  while (pairs.size() < c.pairs) {
    BitVector x = rng.bernoulli_vector(c.d, 0.5), yb = rng.bernoulli_vector(c.d, 0.5);
    if (!(x == yb)) pairs.emplace_back(std::move(x), std::move(yb));
  }
  std::size_t outside = 0, cells = 0;
  for (auto t : c.ts) {
    const double p = std::exp2(-static_cast<double>(t));
    const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(c.trials));
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto est = base_wrong_rate(pairs[k].first, pairs[k].second, t, c.trials, c.seed * 7919 + t * 131 + k);
      const bool in = std::fabs(est.mean - p) <= 3 * sigma;
      outside += in ? 0 : 1;
      ++cells;
      r.add_row({{"t", t}, {"pair", k}, {"x", pairs[k].first.to_string()}, {"ybar", pairs[k].second.to_string()},
                 {"rate", est.mean}, {"expected", p}, {"sigma", sigma}, {"within_3sigma", in}});
    }
  }
  set_check(r, "cells_outside_3sigma", outside == 0, static_cast<double>(outside), 0.0);
  r.aggregates["cells"] = cells;
  return r;
}

// ---------------------------------------------------------------------------
// One-sidedness, exhaustive over small dimensions
// ---------------------------------------------------------------------------

struct OneSidedConfig {
  std::vector<std::size_t> dims = {1, 2, 3, 4, 5, 6};
  std::size_t max_w = 4;
  std::uint64_t tapes = 100;
  std::uint64_t seed = 3;
};

// Small-dimension overrides that force the recursive branches.
inline Overrides small_dim_overrides() {
  Overrides ov;
  ov.base_coeff = 0.5;
  ov.t_cap = 4;
  return ov;
}

inline Dataset full_cube(std::size_t d) {
  Dataset ds(d);
  for (std::uint64_t v = 0; v < (std::uint64_t{1} << d); ++v) {
    BitVector p(d);
    for (std::size_t k = 0; k < d; ++k)
      if ((v >> k) & 1U) p.set(k);
    ds.push_back(std::move(p));
  }
  return ds;
}

inline Report run_one_sided(const OneSidedConfig& c) {
  Report r;
  r.experiment = "one-sidedness";
  r.params = {{"dims", c.dims}, {"max_w", c.max_w}, {"tapes", c.tapes}, {"seed", c.seed},
              {"overrides", overrides_json(small_dim_overrides())}};
  std::uint64_t violations = 0, runs = 0;
  for (auto d : c.dims) {
    const Dataset cube = full_cube(d);
    const EmpiricalDistribution lam(cube);
    const double w = static_cast<double>(std::min(c.max_w, d));
    const SqConfig sc{w, 0.25, 0.1, small_dim_overrides()};
    const PmConfig pc{w, 0.25, 0.1, small_dim_overrides()};
    std::uint64_t v_base = 0, v_sq = 0, v_pm = 0, n_base = 0, n_sq = 0, n_pm = 0;
    // Subset pairs.
    for (const auto& y : cube.points()) {
      if (static_cast<double>(y.popcount()) > w) continue;
      for (const auto& x : cube.points()) {
        if (!subset_of(x, y)) continue;
        for (std::uint64_t k = 0; k < c.tapes; ++k) {
          const std::uint64_t s = c.seed * 1000003 + k;
          const BaseCall bc{BaseMode::SQ, w, w, 0.1};
          if (run_base(bc, x, y, special_advice_sq(x, y, w, w), s).output() != 1) ++v_base;
          ++n_base;
          if (run_sq(sc, lam, x, y, sq_special_advice(sc, lam, x, y, s), s).output() != 1) ++v_sq;
          ++n_sq;
        }
      }
    }
    // Matching pairs: every pattern with at most w stars, every point it matches.
    std::uint64_t patterns = 1;
    for (std::size_t k = 0; k < d; ++k) patterns *= 3;
    for (std::uint64_t code = 0; code < patterns; ++code) {
      TernaryPattern y(d);
      std::uint64_t v = code;
      for (std::size_t k = 0; k < d; ++k, v /= 3) y.set(k, static_cast<Symbol>(v % 3));
      if (static_cast<double>(y.star_count()) > w) continue;
      for (const auto& x : cube.points()) {
        if (!match_pm(x, y)) continue;
        for (std::uint64_t k = 0; k < c.tapes; ++k) {
          const std::uint64_t s = c.seed * 1000003 + k;
          const BaseCall bc{BaseMode::PM, w, w, 0.1};
          if (run_base(bc, x, y, special_advice_pm(x, y), s).output() != 1) ++v_base;
          ++n_base;
          if (run_pm(pc, lam, x, y, pm_special_advice(pc, lam, x, y, s), s).output() != 1) ++v_pm;
          ++n_pm;
        }
      }
    }
    violations += v_base + v_sq + v_pm;
    runs += n_base + n_sq + n_pm;
    r.add_row({{"d", d}, {"w", w}, {"base_runs", n_base}, {"base_violations", v_base}, {"sq_runs", n_sq},
               {"sq_violations", v_sq}, {"pm_runs", n_pm}, {"pm_violations", v_pm}});
  }
  r.aggregates["runs"] = runs;
  set_check(r, "violations", violations == 0, static_cast<double>(violations), 0.0);
  return r;
}

// ---------------------------------------------------------------------------
// Soundness against wrong advice
// ---------------------------------------------------------------------------

struct SoundnessConfig {
  std::size_t d = 32;
  double w = 8;
  double eps = 0.25;
  double delta = 0.05;
  std::size_t n = 256;
  std::uint64_t trials = 10000;
  std::uint64_t seed = 4;
};

inline Overrides soundness_overrides() {
  Overrides ov;
  ov.base_coeff = 1.0;
  ov.t_cap = 8;
  return ov;
}

// Special advice with one bit flipped, or one extra bit when it is empty.
inline BitString corrupt(const BitString& m, InstanceRng& rng) {
  if (m.empty()) return BitString::from_uint(rng.below(2), 1);
  BitString out;
  const auto flip = rng.below(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out.push_back(m.get(i) != (i == flip));
  return out;
}

inline Report run_soundness(const SoundnessConfig& c) {
  Report r;
  r.experiment = "soundness";
  r.params = {{"d", c.d}, {"w", c.w}, {"eps", c.eps}, {"delta", c.delta}, {"n", c.n}, {"trials", c.trials},
              {"seed", c.seed}, {"overrides", overrides_json(soundness_overrides())}};
  InstanceRng rng(c.seed);
  const Dataset ds = gen_uniform(c.n, c.d, 0.15, c.seed);
  const EmpiricalDistribution lam(ds);
  const Overrides ov = soundness_overrides();
  const SqConfig sc{c.w, c.eps, c.delta, ov};
  const PmConfig pc{c.w, c.eps, c.delta, ov};
  const std::size_t wz = floor_size(c.w);
  const double sigma = std::sqrt(c.delta * (1 - c.delta) / static_cast<double>(c.trials));
  for (const char* proto : {"base", "sq", "pm"}) {
    std::uint64_t accepts = 0;
    for (std::uint64_t k = 0; k < c.trials; ++k) {
      // True match or subset pair, so only the advice is wrong.
      const BitVector* xp = nullptr;
      do xp = &ds[rng.below(ds.size())]; while (xp->popcount() > wz);
      const BitVector& x = *xp;
      BitVector y = x;
      while (y.popcount() < wz) y.set(rng.below(c.d));
      const std::uint64_t pub = rng.below(std::numeric_limits<std::uint64_t>::max());
      const std::uint64_t pri = rng.below(std::numeric_limits<std::uint64_t>::max());
      int out = 0;
      if (std::string(proto) == "base") {
        const BaseCall bc{BaseMode::SQ, c.w, c.w, c.delta};
        out = run_base(bc, x, y, corrupt(special_advice_sq(x, y, bc.z, bc.w), rng), pub, {}, pri).output();
      } else if (std::string(proto) == "sq") {
        out = run_sq(sc, lam, x, y, corrupt(sq_special_advice(sc, lam, x, y, pub), rng), pub, pri).output();
      } else {
        TernaryPattern py = TernaryPattern::exact(x);
        for (auto i : rng.choose(c.d, wz)) py.set(i, Symbol::STAR);
        out = run_pm(pc, lam, x, py, corrupt(pm_special_advice(pc, lam, x, py, pub), rng), pub, pri).output();
      }
      accepts += out == 1 ? 1 : 0;
    }
    const Estimate e = make_estimate(accepts, c.trials);
    const double bound = c.delta + 3 * sigma;
    r.add_row({{"protocol", proto}, {"trials", c.trials}, {"accept_rate", e.mean}, {"bound", bound}});
    set_check(r, std::string(proto) + "_accept_rate", e.mean <= bound, e.mean, bound);
  }
  return r;
}

// ---------------------------------------------------------------------------
// False-positive mass of the partial-match protocol and the compiled tree
// ---------------------------------------------------------------------------

struct FalsePositiveConfig {
  std::size_t n = 512;
  std::size_t d = 64;
  std::size_t w = 32;
  std::size_t queries = 40;
  std::uint64_t seed = 5;
};

inline Report run_false_positive(const FalsePositiveConfig& c) {
  Report r;
  const CompileParams cp = desk_preset(ProtocolKind::PM, static_cast<double>(c.w));
  r.experiment = "false-positive";
  r.params = {{"n", c.n}, {"d", c.d}, {"queries", c.queries}, {"seed", c.seed}, {"compile", compile_params_json(cp)}};
  InstanceRng rng(c.seed);
  const Dataset ds = gen_uniform(c.n, c.d, 0.5, c.seed);
  const EmpiricalDistribution lam(ds);
  const PmConfig pc{cp.w, cp.eps, cp.delta, cp.ov};
  const ProtocolTree tree = preprocess(ds, cp, c.seed);
  std::uint64_t false_accepts = 0, non_matching = 0;
  double scan_sum = 0;
  std::uint64_t scan_queries = 0;
  for (std::size_t q = 0; q < c.queries; ++q) {
    const TernaryPattern y = near_miss_pattern(rng, ds[rng.below(ds.size())], c.w);
    const std::uint64_t s = c.seed * 1000003 + q;
    std::uint64_t fa = 0, nm = 0;
    for (std::uint32_t i = 0; i < ds.size(); ++i) {
      if (match_pm(ds[i], y)) continue;
      ++nm;
      if (run_pm(pc, lam, ds[i], y, pm_special_advice(pc, lam, ds[i], y, s), s).output() == 1) ++fa;
    }
    false_accepts += fa;
    non_matching += nm;
    const QueryReport qr = query(tree, ds, y);
    const bool no_match = qr.matches.empty();
    if (no_match) {
      scan_sum += static_cast<double>(qr.candidates_scanned);
      ++scan_queries;
    }
    r.add_row({{"query", q}, {"seed", s}, {"non_matching", nm}, {"false_accepts", fa},
               {"scanned", qr.candidates_scanned}, {"matches", qr.matches.size()}});
  }
  const Estimate e = make_estimate(false_accepts, std::max<std::uint64_t>(non_matching, 1));
  const double bound = cp.eps + cp.delta + 3 * e.stderr_;
  r.aggregates["non_matching_acceptance"] = {{"mean", e.mean}, {"stderr", e.stderr_}, {"count", non_matching}};
  set_check(r, "non_matching_acceptance", e.mean <= bound, e.mean, bound);
  const double mean_scan = scan_queries ? scan_sum / static_cast<double>(scan_queries) : 0.0;
  const double scan_bound = 2.0 * cp.eps * static_cast<double>(c.n);
  r.aggregates["scan_non_matching"] = {{"mean", mean_scan}, {"count", scan_queries}};
  set_check(r, "scan_non_matching", scan_queries > 0 && mean_scan <= scan_bound, mean_scan, scan_bound);
  return r;
}

// ---------------------------------------------------------------------------
// Disjointness protocol ceilings and error
// ---------------------------------------------------------------------------

struct DisjointnessConfig {
  std::vector<std::size_t> dims = {32, 64, 128};
  double eps = 0.2;
  std::size_t n = 2000;
  double alice_density = 0.4;
  std::uint64_t runs = 10000;
  std::uint64_t seed = 6;
};

// Bob's density chosen so that a pair is disjoint with probability about 1/2.
inline double bob_density(std::size_t d, double alice_density) {
  return std::log(2.0) / (static_cast<double>(d) * alice_density);
}

inline Report run_disjointness(const DisjointnessConfig& c) {
  Report r;
  r.experiment = "disjointness";
  r.params = {{"dims", c.dims}, {"eps", c.eps}, {"n", c.n}, {"alice_density", c.alice_density},
              {"runs", c.runs}, {"seed", c.seed}};
  bool all_ok = true;
  for (auto d : c.dims) {
    const Dataset A = gen_uniform(c.n, d, c.alice_density, c.seed * 3 + d);
    const Dataset B = gen_uniform(c.n, d, bob_density(d, c.alice_density), c.seed * 5 + d);
    const EmpiricalDistribution lam(A), rho(B);
    StdParams p;
    p.d = d;
    p.eps = c.eps;
    const StdDerived D = derive_std(p);
    InstanceRng rng(c.seed * 7 + d);
    std::uint64_t a_over = 0, b_over = 0, errors = 0, wrong_intersecting = 0, budget = 0;
    std::uint64_t max_a = 0, max_b = 0;
    for (std::uint64_t k = 0; k < c.runs; ++k) {
      const BitVector& x = A[rng.below(A.size())];
      const BitVector& y = B[rng.below(B.size())];
      const int truth = x.intersects(y) ? 1 : 0;
      const StdResult res = run_std(lam, rho, x, y, c.seed * 1000003 + k, p);
      max_a = std::max(max_a, res.a);
      max_b = std::max(max_b, res.b);
      a_over += static_cast<double>(res.a) > D.a_max ? 1 : 0;
      b_over += static_cast<double>(res.b) > D.b_max ? 1 : 0;
      errors += res.intersecting != truth ? 1 : 0;
      wrong_intersecting += res.intersecting == 1 && truth == 0 ? 1 : 0;
      budget += res.budget_stop ? 1 : 0;
    }
    const Estimate e = make_estimate(errors, c.runs);
    const double sigma = std::sqrt(c.eps * (1 - c.eps) / static_cast<double>(c.runs));
    const bool ok = a_over == 0 && b_over == 0 && e.mean <= c.eps + 3 * sigma && wrong_intersecting == 0;
    all_ok = all_ok && ok;
    r.add_row({{"d", d}, {"ell", D.ell}, {"a_max", D.a_max}, {"b_max", D.b_max}, {"max_a", max_a},
               {"max_b", max_b}, {"a_over", a_over}, {"b_over", b_over}, {"error_rate", e.mean},
               {"error_bound", c.eps + 3 * sigma}, {"wrong_intersecting", wrong_intersecting},
               {"budget_stops", budget}});
    const std::string tag = "d" + std::to_string(d);
    set_check(r, tag + "_alice_ceiling", a_over == 0, static_cast<double>(max_a), D.a_max);
    set_check(r, tag + "_bob_ceiling", b_over == 0, static_cast<double>(max_b), D.b_max);
    set_check(r, tag + "_type2_error", e.mean <= c.eps + 3 * sigma, e.mean, c.eps + 3 * sigma);
    set_check(r, tag + "_declared_intersecting_wrong", wrong_intersecting == 0,
              static_cast<double>(wrong_intersecting), 0.0);
  }
  (void)all_ok;
  return r;
}

struct FixSeedConfig {
  std::size_t d = 64;
  double eps = 0.2;
  std::size_t n = 2000;
  double alice_density = 0.4;
  std::size_t candidates = 16;
  std::uint64_t trials = 2000;
  std::uint64_t seed = 7;
};

inline Report run_fix_seed(const FixSeedConfig& c) {
  Report r;
  r.experiment = "fix-seed";
  r.params = {{"d", c.d}, {"eps", c.eps}, {"n", c.n}, {"alice_density", c.alice_density},
              {"candidates", c.candidates}, {"trials", c.trials}, {"seed", c.seed}};
  const Dataset A = gen_uniform(c.n, c.d, c.alice_density, c.seed * 3);
  const Dataset B = gen_uniform(c.n, c.d, bob_density(c.d, c.alice_density), c.seed * 5);
  const EmpiricalDistribution lam(A), rho(B);
  StdParams p;
  p.d = c.d;
  p.eps = c.eps;
  std::vector<std::uint64_t> seeds;
  for (std::size_t k = 0; k < c.candidates; ++k) seeds.push_back(c.seed * 1000003 + k);
  const FixedSeed f = fix_randomness(lam, rho, p, seeds, c.trials, c.seed);
  double mean_sel = 0, min_sel = 1;
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    r.add_row({{"seed", seeds[k]}, {"selection_error", f.selection_error[k]}, {"chosen", seeds[k] == f.seed}});
    mean_sel += f.selection_error[k];
    min_sel = std::min(min_sel, f.selection_error[k]);
  }
  mean_sel /= static_cast<double>(seeds.size());
  r.aggregates["chosen_seed"] = f.seed;
  r.aggregates["heldout"] = {{"mean", f.heldout.mean}, {"stderr", f.heldout.stderr_}, {"trials", f.heldout.trials}};
  const double bound = 2 * c.eps + 3 * f.heldout.stderr_;
  set_check(r, "heldout_error", f.heldout.mean <= bound, f.heldout.mean, bound);
  set_check(r, "min_not_above_mean", min_sel <= mean_sel, min_sel, mean_sel);
  return r;
}

// ---------------------------------------------------------------------------
// Random subset-query instance law
// ---------------------------------------------------------------------------

struct RandomLawConfig {
  std::size_t d = 1000;
  std::size_t instances = 100;
  std::size_t n = 2;
  double w_u = 0.2;
  double w_q = 0.5;
  std::uint64_t seed = 8;
};

inline Report run_random_law(const RandomLawConfig& c) {
  Report r;
  r.experiment = "random-sq-law";
  r.params = {{"d", c.d}, {"instances", c.instances}, {"n", c.n}, {"w_u", c.w_u}, {"w_q", c.w_q}, {"seed", c.seed}};
  // Cells indexed by (y_i, x'_i).
  std::uint64_t cnt[2][2] = {{0, 0}, {0, 0}};
  std::uint64_t subset_ok = 0;
  for (std::size_t k = 0; k < c.instances; ++k) {
    const Instance ins = gen_random_sq(c.n, c.d, c.w_u, c.w_q, c.seed * 1000003 + k);
    const BitVector& y = ins.sq_queries[0];
    const BitVector& xs = ins.dataset[ins.planted[0]];
    subset_ok += subset_of(xs, y) ? 1 : 0;
    for (std::size_t i = 0; i < c.d; ++i) ++cnt[y.get(i)][xs.get(i)];
  }
  const double total = static_cast<double>(c.d * c.instances);
  const double expect[2][2] = {{1 - c.w_q, 0.0}, {c.w_q - c.w_u, c.w_u}};
  double chi2 = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      if (expect[a][b] > 0) chi2 += std::pow(static_cast<double>(cnt[a][b]) - total * expect[a][b], 2) / (total * expect[a][b]);
  // Three free cells give two degrees of freedom, where the tail is exp(-x/2).
  const double p_value = cnt[0][1] > 0 ? 0.0 : std::exp(-chi2 / 2.0);
  r.add_row({{"y0_x0", cnt[0][0]}, {"y0_x1", cnt[0][1]}, {"y1_x0", cnt[1][0]}, {"y1_x1", cnt[1][1]},
             {"chi2", chi2}, {"p_value", p_value}});
  set_check(r, "chi2_p_value", p_value > 0.001, p_value, 0.001, ">");
  set_check(r, "special_point_subset", subset_ok == c.instances, static_cast<double>(subset_ok),
            static_cast<double>(c.instances), "==");
  set_check(r, "coordinates", total >= 1e5, total, 1e5, ">=");
  return r;
}

// ---------------------------------------------------------------------------
// Scan-count scaling
// ---------------------------------------------------------------------------

struct ScalingConfig {
  std::vector<std::size_t> ns = {256, 1024, 4096, 16384};
  std::size_t d = 64;
  std::size_t w = 32;
  std::size_t queries = 200;
  std::uint64_t seed = 9;
  // When set, eps and delta follow n^-eps_exp and n^-delta_exp, clamped to
  // the desk ranges, instead of the fixed desk values.
  std::optional<double> eps_exp, delta_exp;
};

inline CompileParams scaling_params(const ScalingConfig& c, std::size_t n) {
  CompileParams cp = desk_preset(ProtocolKind::PM, static_cast<double>(c.w));
  const double nn = static_cast<double>(n);
  if (c.eps_exp) cp.eps = std::clamp(std::pow(nn, -*c.eps_exp), 0.05, 0.49);
  if (c.delta_exp) cp.delta = std::clamp(std::pow(nn, -*c.delta_exp), 0.001, 0.1);
  cp.delta = std::min(cp.delta, cp.eps);
  return cp;
}

inline Report run_scaling(const ScalingConfig& c) {
  Report r;
  r.experiment = "scaling";
  r.params = {{"ns", c.ns}, {"d", c.d}, {"w", c.w}, {"queries", c.queries}, {"seed", c.seed},
              {"compile", compile_params_json(desk_preset(ProtocolKind::PM, static_cast<double>(c.w)))}};
  if (c.eps_exp) r.params["eps_exp"] = *c.eps_exp;
  if (c.delta_exp) r.params["delta_exp"] = *c.delta_exp;
  std::vector<double> xs, ys;
  for (auto n : c.ns) {
    const CompileParams cp = scaling_params(c, n);
    const std::uint64_t s = c.seed * 1000003 + n;
    const Dataset ds = gen_uniform(n, c.d, 0.5, s);
    const auto t0 = std::chrono::steady_clock::now();
    const ProtocolTree tree = preprocess(ds, cp, s);
    const double build_s = seconds_since(t0);
    InstanceRng rng(s + 1);
    double sum = 0;
    std::uint64_t used = 0;
    for (std::size_t q = 0; q < c.queries; ++q) {
      const TernaryPattern y = random_pattern(rng, c.d, c.w);
      const QueryReport qr = query(tree, ds, y);
      if (!qr.matches.empty()) continue;
      sum += static_cast<double>(qr.candidates_scanned);
      ++used;
    }
    const double mean = used ? sum / static_cast<double>(used) : 0.0;
    xs.push_back(static_cast<double>(n));
    ys.push_back(mean);
    r.add_row({{"n", n}, {"eps", cp.eps}, {"delta", cp.delta}, {"tree_nodes", tree.meta.node_count},
               {"stored_candidates", tree.meta.stored_candidates}, {"build_seconds", build_s},
               {"queries_used", used}, {"mean_scanned", mean}});
  }
  bool positive = true;
  for (double y : ys) positive = positive && y > 0;
  const double slope = positive ? loglog_slope(xs, ys) : std::numeric_limits<double>::quiet_NaN();
  r.aggregates["slope"] = positive ? ojson(slope) : ojson(nullptr);
  set_check(r, "loglog_slope", positive && slope < 1.0, positive ? slope : -1.0, 1.0, "<");
  return r;
}

// ---------------------------------------------------------------------------
// Standalone protocol simulation
// ---------------------------------------------------------------------------

struct SimConfig {
  std::string protocol = "base";  // base, sq or pm
  std::size_t d = 32;
  std::size_t n = 256;
  double w = 8;
  double eps = 0.25;
  double delta = 0.05;
  std::optional<std::uint64_t> t;  // parity rounds of the base protocol
  Overrides ov = soundness_overrides();
  std::uint64_t trials = 10000;
  std::uint64_t seed = 1;
};

// Accept rate and bit totals under special advice (true pairs) and wrong
// advice. For the base protocol a third row runs a fixed unequal (x, ybar)
// pair, whose accept rate is exactly 2^-t.
inline Report run_sim(const SimConfig& c) {
  require(c.protocol == "base" || c.protocol == "sq" || c.protocol == "pm", "protocol must be base, sq or pm");
  require(c.trials >= 1, "need at least one trial");
  validate_error_params(c.eps, c.delta);
  Overrides ov = c.ov;
  if (c.t) ov.base_rounds = *c.t;
  Report r;
  r.experiment = "sim-" + c.protocol;
  r.params = {{"protocol", c.protocol}, {"d", c.d}, {"n", c.n}, {"w", c.w}, {"eps", c.eps}, {"delta", c.delta},
              {"trials", c.trials}, {"seed", c.seed}, {"overrides", overrides_json(ov)}};
  InstanceRng rng(c.seed);
  const Dataset ds = gen_uniform(c.n, c.d, 0.15, c.seed);
  const EmpiricalDistribution lam(ds);
  const std::size_t wz = std::min(floor_size(c.w), c.d);
  const SqConfig sc{c.w, c.eps, c.delta, ov};
  const PmConfig pc{c.w, c.eps, c.delta, ov};

  for (const bool wrong : {false, true}) {
    std::uint64_t accepts = 0, a = 0, b = 0, m = 0, cc = 0;
    for (std::uint64_t k = 0; k < c.trials; ++k) {
      const BitVector* xp = nullptr;
      do xp = &ds[rng.below(ds.size())]; while (xp->popcount() > wz);
      const BitVector& x = *xp;
      BitVector y = x;
      while (y.popcount() < wz) y.set(rng.below(c.d));
      const std::uint64_t pub = rng.below(std::numeric_limits<std::uint64_t>::max());
      const std::uint64_t pri = rng.below(std::numeric_limits<std::uint64_t>::max());
      auto advice = [&](BitString honest) { return wrong ? corrupt(honest, rng) : honest; };
      Transcript tr;
      if (c.protocol == "base") {
        const BaseCall bc{BaseMode::SQ, c.w, c.w, c.delta};
        tr = run_base(bc, x, y, advice(special_advice_sq(x, y, bc.z, bc.w)), pub, ov, pri);
      } else if (c.protocol == "sq") {
        tr = run_sq(sc, lam, x, y, advice(sq_special_advice(sc, lam, x, y, pub)), pub, pri).transcript;
      } else {
        TernaryPattern py = TernaryPattern::exact(x);
        for (auto i : rng.choose(c.d, wz)) py.set(i, Symbol::STAR);
        tr = run_pm(pc, lam, x, py, advice(pm_special_advice(pc, lam, x, py, pub)), pub, pri).transcript;
      }
      accepts += tr.output() == 1 ? 1 : 0;
      a += tr.c_a();
      b += tr.c_b();
      m += tr.c_m();
      cc += tr.c_c();
    }
    const Estimate e = make_estimate(accepts, c.trials);
    const double tn = static_cast<double>(c.trials);
    r.add_row({{"advice", wrong ? "wrong" : "special"}, {"trials", c.trials}, {"accept_rate", e.mean},
               {"stderr", e.stderr_}, {"expected", wrong ? ojson(nullptr) : ojson(1.0)},
               {"mean_alice_bits", static_cast<double>(a) / tn}, {"mean_bob_bits", static_cast<double>(b) / tn},
               {"mean_merlin_bits", static_cast<double>(m) / tn}, {"mean_carol_bits", static_cast<double>(cc) / tn}});
    if (!wrong) set_check(r, "special_accept_rate", accepts == c.trials, e.mean, 1.0, "==");
    else set_check(r, "wrong_accept_rate", e.mean <= c.delta + 3 * std::sqrt(c.delta * (1 - c.delta) / tn), e.mean,
                   c.delta + 3 * std::sqrt(c.delta * (1 - c.delta) / tn));
  }
  if (c.protocol == "base") {
    BitVector x = rng.bernoulli_vector(c.d, 0.5), yb = rng.bernoulli_vector(c.d, 0.5);
    while (x == yb) yb = rng.bernoulli_vector(c.d, 0.5);
    const std::uint64_t t = base_rounds_for(c.delta, ov);
    const Estimate e = base_wrong_rate(x, yb, t, c.trials, c.seed + 1);
    const double p = std::exp2(-static_cast<double>(t));
    const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(c.trials));
    r.add_row({{"advice", "fixed-unequal-pair"}, {"trials", c.trials}, {"accept_rate", e.mean}, {"stderr", e.stderr_},
               {"expected", p}, {"x", x.to_string()}, {"ybar", yb.to_string()}, {"t", t}});
    set_check(r, "unequal_pair_rate", std::fabs(e.mean - p) <= 3 * sigma, e.mean, p, "~");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Determinism and golden transcripts
// ---------------------------------------------------------------------------

// Fixed-seed transcripts checked into tests/golden.
inline std::vector<std::pair<std::string, std::string>> golden_transcripts() {
  std::vector<std::pair<std::string, std::string>> out;
  const Dataset ds = gen_uniform(64, 24, 0.3, 11);
  const EmpiricalDistribution lam(ds);
  Overrides ov;
  ov.base_coeff = 1.0;
  ov.t_cap = 4;
  {
    const BitVector x = BitVector::parse("0110000000000000"), y = BitVector::parse("0111000010000000");
    const BaseCall c{BaseMode::SQ, 4, 4, 0.05};
    out.emplace_back("base_sq", run_base(c, x, y, special_advice_sq(x, y, 4, 4), 21).dump());
  }
  {
    const BitVector x = BitVector::parse("1011");
    const TernaryPattern y = TernaryPattern::parse("1*1*");
    const BaseCall c{BaseMode::PM, 2, 2, 0.05};
    out.emplace_back("base_pm", run_base(c, x, y, special_advice_pm(x, y), 22).dump());
  }
  {
    const SqConfig c{8, 0.25, 0.05, ov};
    const BitVector& x = ds[3];
    BitVector y = x;
    InstanceRng rng(23);
    while (y.popcount() < 8) y.set(rng.below(24));
    out.emplace_back("sq", run_sq(c, lam, x, y, sq_special_advice(c, lam, x, y, 23), 23).transcript.dump());
  }
  {
    const PmConfig c{8, 0.25, 0.05, ov};
    const BitVector& x = ds[5];
    InstanceRng rng(24);
    TernaryPattern y = TernaryPattern::exact(x);
    for (auto k : rng.choose(24, 8)) y.set(k, Symbol::STAR);
    out.emplace_back("pm", run_pm(c, lam, x, y, pm_special_advice(c, lam, x, y, 24), 24).transcript.dump());
  }
  {
    const Dataset A = gen_uniform(200, 32, 0.4, 25), B = gen_uniform(200, 32, bob_density(32, 0.4), 26);
    const EmpiricalDistribution la(A), rb(B);
    StdParams p;
    p.d = 32;
    p.eps = 0.2;
    out.emplace_back("std", run_std(la, rb, A[7], B[9], 27, p).transcript.dump());
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw usage_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct DeterminismConfig {
  std::string golden_dir;
  std::size_t repeats = 3;
  std::uint64_t seed = 10;
};

inline Report run_determinism(const DeterminismConfig& c) {
  Report r;
  r.experiment = "determinism";
  r.params = {{"golden_dir", c.golden_dir}, {"repeats", c.repeats}, {"seed", c.seed}};
  bool trees_equal = true;
  for (auto protocol : {ProtocolKind::PM, ProtocolKind::SQ}) {
    const Dataset ds = gen_uniform(protocol == ProtocolKind::PM ? 1024 : 48, protocol == ProtocolKind::PM ? 64 : 16,
                                   protocol == ProtocolKind::PM ? 0.5 : 0.2, c.seed);
    CompileParams cp = desk_preset(protocol, protocol == ProtocolKind::PM ? 32 : 8);
    if (protocol == ProtocolKind::SQ) {
      cp.ov.base_coeff = 1.0;
      cp.ov.t_cap = 3;
      cp.ov.h = 2;
    }
    const auto first = preprocess(ds, cp, c.seed).serialize();
    for (std::size_t k = 1; k < c.repeats; ++k) trees_equal = trees_equal && preprocess(ds, cp, c.seed).serialize() == first;
    const bool round_trip = ProtocolTree::deserialize(first).serialize() == first;
    trees_equal = trees_equal && round_trip;
    r.add_row({{"artifact", protocol == ProtocolKind::PM ? "tree-pm" : "tree-sq"}, {"bytes", first.size()},
               {"stable", trees_equal}});
  }
  std::size_t mismatches = 0;
  for (std::size_t k = 0; k < c.repeats; ++k) {
    for (const auto& [name, text] : golden_transcripts()) {
      std::string golden;
      try {
        golden = read_file(c.golden_dir + "/" + name + ".txt");
      } catch (const usage_error&) {
      }
      const bool same = golden == text;
      mismatches += same ? 0 : 1;
      if (k == 0) r.add_row({{"artifact", "transcript-" + name}, {"bytes", text.size()}, {"stable", same}});
    }
  }
  set_check(r, "tree_bytes_identical", trees_equal, trees_equal ? 0.0 : 1.0, 0.0);
  set_check(r, "golden_mismatches", mismatches == 0, static_cast<double>(mismatches), 0.0);
  return r;
}

}  // namespace pmatch
