#pragma once

// Compiles the partial-match and subset-query protocols into a search tree
// over a dataset, and answers queries by walking Bob's side of the tree.
//
// Node kinds:
//   ALICE   children keyed by Alice's status tag
//   BOB     children keyed by Bob's message (or message class, see below)
//   MERLIN  children keyed by the content Merlin's advice encodes
//   CAROL   one child; stores Carol's message in a shared payload pool
//   LEAF    candidate groups; only 1-leaves are materialized
//
// Branches that no dataset point can complete with output 1 are pruned, so
// an absent child means "output 0" for every point.
//
// Two places are not keyed by the literal message:
//  * Merlin's advice depends on the query, so a Merlin node is keyed by the
//    advice content (Alice's current set). The query derives the special
//    advice for each content and evaluates the parity rounds against the
//    stored private strings.
//  * In the subset-query shedding step Bob's certificate depends on the
//    query, so the Bob edge is keyed by (index, certificate size). Alice's
//    disjointness check is deferred: each point carries a guard (its set
//    inside the chosen sample) that the query checks at the leaf.

#include <algorithm>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <unordered_map>

#include "empirical_dist.hpp"
#include "protocol_pm.hpp"

namespace pmatch {

enum class ProtocolKind : std::uint8_t { PM = 0, SQ = 1 };
enum class NodeKind : std::uint8_t { ALICE = 0, BOB = 1, MERLIN = 2, CAROL = 3, LEAF = 4 };

struct sizing_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TreeNode {
  NodeKind kind;
  std::uint32_t first_edge = 0;
  std::uint32_t edge_count = 0;
  std::uint32_t payload = 0;  // CAROL: pool index; LEAF: leaf index
};

struct TreeEdge {
  BitString key;
  std::uint32_t child;
};

struct LeafGroup {
  std::vector<BitVector> guards;  // one per shedding step on the path
  std::vector<std::uint32_t> members;
};

struct TreeMeta {
  ProtocolKind protocol = ProtocolKind::PM;
  std::uint32_t d = 0;
  std::uint32_t n = 0;
  double w = 0, eps = 0, delta = 0;
  std::uint64_t seed = 0;
  Overrides ov;
  std::uint64_t dataset_fingerprint = 0;
  std::uint64_t node_count = 0;
  std::uint64_t leaf_count = 0;
  std::uint64_t stored_candidates = 0;
  std::uint64_t carol_payload_bits = 0;
  // Largest c_a + c_b + c_m over root-to-leaf paths.
  std::uint64_t max_path_bits = 0;
};

struct BuildOptions {
  std::uint64_t node_ceiling = std::uint64_t{1} << 26;
};

class ProtocolTree {
 public:
  static constexpr std::uint32_t kNone = 0xffffffffu;

  TreeMeta meta;
  std::vector<TreeNode> nodes;
  std::vector<TreeEdge> edges;
  std::vector<BitString> payloads;
  std::vector<std::vector<LeafGroup>> leaves;
  std::uint32_t root = kNone;

  const TreeNode& node(std::uint32_t id) const { return nodes[id]; }

  std::optional<std::uint32_t> child(std::uint32_t id, const BitString& key) const {
    const auto& nd = nodes[id];
    auto b = edges.begin() + nd.first_edge, e = b + nd.edge_count;
    auto it = std::lower_bound(b, e, key, [](const TreeEdge& ed, const BitString& k) { return ed.key < k; });
    if (it == e || !(it->key == key)) return std::nullopt;
    return it->child;
  }
  std::uint32_t only_child(std::uint32_t id) const { return edges[nodes[id].first_edge].child; }

  std::vector<std::uint8_t> serialize() const;
  static ProtocolTree deserialize(const std::vector<std::uint8_t>& bytes);
  void save(const std::string& path) const;
  static ProtocolTree load(const std::string& path);
};

// ---------------------------------------------------------------------------
// Build
// ---------------------------------------------------------------------------

namespace build_detail {

struct Guard {
  BitVector a;
  std::shared_ptr<const Guard> prev;
};

struct Member {
  std::uint32_t idx;
  BitVector x;    // Alice's current set, compact over the current domain
  BitVector aux;  // re-centered point kept for the swapped base call
  std::shared_ptr<const Guard> guard;
};

using Population = std::vector<Member>;

struct Tapes {
  RandomTape pub, pri;
};

struct PathBits {
  std::uint64_t a = 0, b = 0, m = 0;
  std::uint64_t total() const { return a + b + m; }
};

using Cont = std::function<std::optional<std::uint32_t>(Population, Tapes, PathBits)>;

using Children = std::vector<std::pair<BitString, std::uint32_t>>;

inline BitString class_key(std::uint64_t i, std::uint64_t width_i, std::uint64_t sz, std::uint64_t h) {
  BitString k = BitString::from_uint(i, static_cast<unsigned>(width_i));
  k.append_uint(sz, width_for(h + 1));
  return k;
}

inline bool seen_before(const std::vector<BitVector>& vs, std::size_t i) {
  for (std::size_t j = 0; j < i; ++j)
    if (vs[j] == vs[i]) return true;
  return false;
}

class Builder {
 public:
  Builder(const Dataset& ds, ProtocolTree& tree, const BuildOptions& opt) : ds_(ds), tree_(tree), opt_(opt) {}

  std::optional<std::uint32_t> pm(double w, double eps, double delta, const EmpiricalDistribution& lam,
                                  Population pop, Tapes tp, PathBits pb, const Cont& cont) {
    if (pop.empty()) return std::nullopt;
    const PmParams P = derive_pm(w, eps, delta, ov());
    if (P.base_case)
      return base(BaseMode::PM, false, w, w, delta, std::move(pop), tp, pb, cont);

    std::vector<BitVector> samples;
    for (std::uint64_t i = 0; i < P.t; ++i) {
      auto dr = lam.sample(tp.pub);
      if (!dr) break;
      samples.push_back(std::move(dr->value));
    }
    if (samples.empty()) return std::nullopt;

    const auto wi = width_for(P.t + 1);
    const double wh = w + static_cast<double>(P.h);
    PathBits pbb = pb;
    pbb.b += wi;
    Children bob;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (seen_before(samples, i)) continue;
      const BitVector& X = samples[i];
      Population sub;
      for (const auto& mb : pop) {
        BitVector xp = mb.x ^ X;
        if (static_cast<double>(xp.popcount()) <= wh) sub.push_back(Member{mb.idx, xp, xp, mb.guard});
      }
      if (sub.empty()) continue;
      PathBits pa = pbb;
      pa.a += kTagBits;
      const double hd = static_cast<double>(P.h);
      Cont after_sq = [this, hd, wh, delta, &cont](Population p, Tapes t2, PathBits b2) {
        return base(BaseMode::SQ, true, hd, wh, delta / 10.0, std::move(p), t2, b2, cont);
      };
      auto sq_node = sq(wh, eps / 10.0, delta / 10.0, lam.shifted(X), std::move(sub), tp, pa, 0, after_sq);
      if (!sq_node) continue;
      auto alice = make(NodeKind::ALICE, 0, {{tag_bits(Tag::CONTINUE), *sq_node}});
      bob.emplace_back(BitString::from_uint(i, wi), alice);
    }

    // No near match: random halving.
    {
      Tapes th = tp;
      const auto S = draw_halving_sets(th.pub, P.halving, lam.dim());
      const auto wj = width_for(P.halving + 1);
      PathBits ph = pbb;
      ph.b += wj;
      Children jb;
      for (std::size_t j = 0; j < S.size(); ++j) {
        if (seen_before(S, j)) continue;
        Population sub;
        sub.reserve(pop.size());
        for (const auto& mb : pop) sub.push_back(Member{mb.idx, compress(mb.x, S[j]), {}, mb.guard});
        auto c = pm(2.0 * w / 3.0, eps / 2.0, delta / 10.0, lam.restrict_rel(S[j]), std::move(sub), th, ph, cont);
        if (c) jb.emplace_back(BitString::from_uint(j, wj), *c);
      }
      if (auto c = cont(pop, th, ph)) jb.emplace_back(BitString::from_uint(S.size(), wj), *c);
      if (!jb.empty()) {
        auto jn = make(NodeKind::BOB, 0, std::move(jb));
        auto cn = make(NodeKind::CAROL, pool(pack(S)), {{BitString{}, jn}});
        bob.emplace_back(BitString::from_uint(samples.size(), wi), cn);
      }
    }
    if (bob.empty()) return std::nullopt;
    auto bn = make(NodeKind::BOB, 0, std::move(bob));
    return make(NodeKind::CAROL, pool(pack(samples)), {{BitString{}, bn}});
  }

  std::optional<std::uint32_t> sq(double w, double eps, double delta, const EmpiricalDistribution& lam,
                                  Population pop, Tapes tp, PathBits pb, int level, const Cont& cont) {
    if (pop.empty()) return std::nullopt;
    const SqParams P = derive_sq(w, eps, delta, ov());
    if (P.base_case) {
      Population keep;
      for (auto& mb : pop)
        if (static_cast<double>(mb.x.popcount()) <= w) keep.push_back(std::move(mb));
      pb.a += kTagBits;
      auto c = base(BaseMode::SQ, false, w, w, P.delta_p, std::move(keep), tp, pb, cont);
      if (!c) return std::nullopt;
      return make(NodeKind::ALICE, 0, {{tag_bits(Tag::CONTINUE), *c}});
    }
    return sq_loop(P, 0, w, lam, std::move(pop), tp, pb, level, cont);
  }

  std::optional<std::uint32_t> base(BaseMode mode, bool swapped, double z, double w, double delta, Population pop,
                                    Tapes tp, PathBits pb, const Cont& cont) {
    if (pop.empty() || z > w) return std::nullopt;
    const std::size_t dim = swapped ? pop.front().aux.dim() : pop.front().x.dim();
    const auto rounds = base_rounds_for(delta, ov());
    // Private strings are drawn after Merlin commits; they do not depend on the content.
    BitString rs;
    for (std::uint64_t i = 0; i < rounds; ++i) rs.append(tp.pri.bits(dim));
    const auto carol_id = pool(rs);

    std::map<BitVector, Population> by_content;
    for (auto& mb : pop) {
      const BitVector key = swapped ? mb.aux : mb.x;
      by_content[key].push_back(std::move(mb));
    }
    PathBits after = pb;
    after.m += mode == BaseMode::PM ? floor_size(w) : sq_advice_width(z, w);
    after.a += rounds;
    after.b += rounds;
    Children kids;
    for (auto& [content, group] : by_content) {
      auto c = cont(std::move(group), tp, after);
      if (!c) continue;
      auto cn = make(NodeKind::CAROL, carol_id, {{BitString{}, *c}});
      kids.emplace_back(BitString::from_bits(content), cn);
    }
    if (kids.empty()) return std::nullopt;
    return make(NodeKind::MERLIN, 0, std::move(kids));
  }

  std::optional<std::uint32_t> leaf(Population pop, PathBits pb) {
    if (pop.empty()) return std::nullopt;
    std::map<std::vector<BitVector>, std::vector<std::uint32_t>> groups;
    for (const auto& mb : pop) {
      std::vector<BitVector> sig;
      for (auto g = mb.guard; g; g = g->prev) sig.push_back(g->a);
      std::reverse(sig.begin(), sig.end());
      groups[sig].push_back(mb.idx);
    }
    std::vector<LeafGroup> out;
    for (auto& [sig, members] : groups) {
      std::sort(members.begin(), members.end());
      tree_.meta.stored_candidates += members.size();
      out.push_back(LeafGroup{sig, std::move(members)});
    }
    tree_.leaves.push_back(std::move(out));
    ++tree_.meta.leaf_count;
    tree_.meta.max_path_bits = std::max(tree_.meta.max_path_bits, pb.total());
    return make(NodeKind::LEAF, static_cast<std::uint32_t>(tree_.leaves.size() - 1), {});
  }

  void set_overrides(const Overrides& o) { ov_ = o; }

 private:
  const Overrides& ov() const { return ov_; }

  std::optional<std::uint32_t> sq_loop(const SqParams& P, std::uint64_t iter, double wp,
                                       const EmpiricalDistribution& lam, Population pop, Tapes tp, PathBits pb,
                                       int level, const Cont& cont) {
    if (pop.empty()) return std::nullopt;
    const double w = P.w;
    PathBits pa = pb;
    pa.a += kTagBits;
    if (iter == P.iter_cap) {
      Population keep;
      for (auto& mb : pop)
        if (static_cast<double>(mb.x.popcount()) <= wp) keep.push_back(std::move(mb));
      auto c = base(BaseMode::SQ, false, std::max(wp, 0.0), w, P.delta_p, std::move(keep), tp, pa, cont);
      if (!c) return std::nullopt;
      return make(NodeKind::ALICE, 0, {{tag_bits(Tag::CONTINUE), *c}});
    }
    const double small = w / P.ell;
    Population small_pop, big_pop;
    for (auto& mb : pop) {
      const double xs = static_cast<double>(mb.x.popcount());
      if (xs > wp) continue;
      if (xs <= small) small_pop.push_back(std::move(mb));
      else big_pop.push_back(std::move(mb));
    }
    Children kids;
    if (auto c = base(BaseMode::SQ, false, small, w, P.delta_p, std::move(small_pop), tp, pa, cont))
      kids.emplace_back(tag_bits(Tag::SMALL), *c);
    if (auto c = shed_step(P, iter, wp, lam, std::move(big_pop), tp, pa, level, cont))
      kids.emplace_back(tag_bits(Tag::BIG), *c);
    if (kids.empty()) return std::nullopt;
    return make(NodeKind::ALICE, 0, std::move(kids));
  }

  std::optional<std::uint32_t> shed_step(const SqParams& P, std::uint64_t iter, double wp,
                                         const EmpiricalDistribution& lam, Population pop, Tapes tp, PathBits pb,
                                         int level, const Cont& cont) {
    if (pop.empty()) return std::nullopt;
    const double small = P.w / P.ell;
    std::vector<BitVector> samples;
    const auto lo = static_cast<long long>(floor_size(small));
    const auto hi = static_cast<long long>(floor_size(wp));
    for (std::uint64_t i = 0; i < P.t; ++i) {
      auto dr = lam.sample_size_conditioned(lo, hi, tp.pub);
      if (!dr) break;
      samples.push_back(std::move(dr->value));
    }
    if (samples.empty()) return std::nullopt;

    const auto wi = width_for(P.t + 1);
    Children bob;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (seen_before(samples, i)) continue;
      const BitVector& X = samples[i];
      const std::size_t xsz = X.popcount();
      const BitVector keep = X.complement();
      const EmpiricalDistribution next = lam.restrict_rel(keep);
      const auto cert_w = width_for_u128(subset_count(xsz, P.h));
      const std::size_t sz_lo = xsz > floor_size(wp) ? xsz - floor_size(wp) : 0;
      const std::size_t sz_hi = std::min<std::size_t>(P.h, xsz);
      // Precompute each member's projection and guard once per sample.
      std::vector<std::pair<std::size_t, Member>> moved;
      for (const auto& mb : pop) {
        BitVector a = mb.x & X;
        const std::size_t room = xsz - a.popcount();
        auto g = std::make_shared<const Guard>(Guard{std::move(a), mb.guard});
        moved.emplace_back(room, Member{mb.idx, compress(mb.x, keep), mb.aux, std::move(g)});
      }
      for (std::size_t sz = sz_lo; sz <= sz_hi; ++sz) {
        Population sub;
        for (const auto& [room, mb] : moved)
          if (room >= sz) sub.push_back(mb);
        if (sub.empty()) continue;
        PathBits p2 = pb;
        p2.b += wi + cert_w;
        p2.a += kTagBits;
        const double wp2 = wp - static_cast<double>(xsz - sz);
        auto c = sq_loop(P, iter + 1, wp2, next, std::move(sub), tp, p2, level, cont);
        if (!c) continue;
        auto alice = make(NodeKind::ALICE, 0, {{tag_bits(Tag::CONTINUE), *c}});
        bob.emplace_back(class_key(i, wi, sz, P.h), alice);
      }
    }

    {
      Tapes th = tp;
      const auto S = draw_halving_sets(th.pub, P.halving, lam.dim());
      const auto wj = width_for(P.halving + 1);
      PathBits ph = pb;
      ph.b += wi + wj;
      Children jb;
      for (std::size_t j = 0; j < S.size(); ++j) {
        if (seen_before(S, j)) continue;
        Population sub;
        sub.reserve(pop.size());
        for (const auto& mb : pop) sub.push_back(Member{mb.idx, compress(mb.x, S[j]), mb.aux, mb.guard});
        auto c = sq(2.0 * wp / 3.0, P.eps / 2.0, P.delta_p, lam.restrict_rel(S[j]), std::move(sub), th, ph,
                    level + 1, cont);
        if (c) jb.emplace_back(BitString::from_uint(j, wj), *c);
      }
      if (auto c = cont(pop, th, ph)) jb.emplace_back(BitString::from_uint(S.size(), wj), *c);
      if (!jb.empty()) {
        auto jn = make(NodeKind::BOB, 0, std::move(jb));
        auto cn = make(NodeKind::CAROL, pool(pack(S)), {{BitString{}, jn}});
        bob.emplace_back(class_key(samples.size(), wi, 0, P.h), cn);
      }
    }
    if (bob.empty()) return std::nullopt;
    auto bn = make(NodeKind::BOB, 0, std::move(bob));
    return make(NodeKind::CAROL, pool(pack(samples)), {{BitString{}, bn}});
  }

  std::uint32_t make(NodeKind kind, std::uint32_t payload, Children kids) {
    if (tree_.nodes.size() >= opt_.node_ceiling) {
      throw sizing_error("node ceiling of " + std::to_string(opt_.node_ceiling) + " reached after " +
                         std::to_string(tree_.leaves.size()) + " leaves and " +
                         std::to_string(tree_.meta.stored_candidates) + " stored candidates; raise the ceiling, " +
                         "cap t, or lower the sparsity");
    }
    std::sort(kids.begin(), kids.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    TreeNode nd{kind, static_cast<std::uint32_t>(tree_.edges.size()), static_cast<std::uint32_t>(kids.size()), payload};
    for (auto& [k, c] : kids) tree_.edges.push_back(TreeEdge{std::move(k), c});
    tree_.nodes.push_back(nd);
    return static_cast<std::uint32_t>(tree_.nodes.size() - 1);
  }

  std::uint32_t pool(const BitString& payload) {
    const std::uint64_t h = std::hash<std::string>{}(payload.hex()) ^ payload.size();
    auto& ids = pool_index_[h];
    for (auto id : ids)
      if (tree_.payloads[id] == payload) return id;
    tree_.payloads.push_back(payload);
    tree_.meta.carol_payload_bits += payload.size();
    ids.push_back(static_cast<std::uint32_t>(tree_.payloads.size() - 1));
    return ids.back();
  }

  const Dataset& ds_;
  ProtocolTree& tree_;
  BuildOptions opt_;
  Overrides ov_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> pool_index_;
};

}  // namespace build_detail

struct CompileParams {
  ProtocolKind protocol = ProtocolKind::PM;
  double w = 16;
  double eps = 0.25;
  double delta = 0.01;
  Overrides ov;
};

inline ProtocolTree preprocess(const Dataset& ds, const CompileParams& cp, std::uint64_t seed,
                               const BuildOptions& opt = {}) {
  using namespace build_detail;
  require(!ds.empty(), "dataset must be nonempty");
  validate_error_params(cp.eps, cp.delta);
  require(cp.w >= 1 && cp.w <= static_cast<double>(ds.dim()), "need 1 <= w <= d");

  ProtocolTree tree;
  tree.meta.protocol = cp.protocol;
  tree.meta.d = static_cast<std::uint32_t>(ds.dim());
  tree.meta.n = static_cast<std::uint32_t>(ds.size());
  tree.meta.w = cp.w;
  tree.meta.eps = cp.eps;
  tree.meta.delta = cp.delta;
  tree.meta.seed = seed;
  tree.meta.ov = cp.ov;
  tree.meta.dataset_fingerprint = ds.fingerprint();

  Builder b(ds, tree, opt);
  b.set_overrides(cp.ov);
  EmpiricalDistribution lam(ds);
  Population pop;
  pop.reserve(ds.size());
  for (std::uint32_t i = 0; i < ds.size(); ++i) pop.push_back(Member{i, ds[i], {}, nullptr});
  Tapes tp{RandomTape(seed, Stream::PUB), RandomTape(seed, Stream::PRI)};
  Cont to_leaf = [&b](Population p, Tapes, PathBits pb) { return b.leaf(std::move(p), pb); };
  std::optional<std::uint32_t> root;
  if (cp.protocol == ProtocolKind::PM) root = b.pm(cp.w, cp.eps, cp.delta, lam, std::move(pop), tp, {}, to_leaf);
  else root = b.sq(cp.w, cp.eps, cp.delta, lam, std::move(pop), tp, {}, 0, to_leaf);
  tree.root = root ? *root : ProtocolTree::kNone;
  tree.meta.node_count = tree.nodes.size();
  return tree;
}

// ---------------------------------------------------------------------------
// Query
// ---------------------------------------------------------------------------

struct QueryOptions {
  // Also follow Merlin branches reachable with some other content's advice.
  bool all_present_advice = false;
};

struct QueryReport {
  std::vector<std::uint32_t> matches;
  // Indices found in visited 1-leaves before the final filter.
  std::vector<std::uint32_t> candidates;
  std::uint64_t leaves_visited = 0;
  std::uint64_t candidates_scanned = 0;
  std::uint64_t candidates_rejected = 0;
  std::uint64_t bits_walked = 0;
  std::uint64_t nodes_visited = 0;
  std::uint64_t merlin_branches = 0;
};

namespace query_detail {

inline std::vector<BitVector> unpack(const BitString& payload, std::size_t dim) {
  std::vector<BitVector> out;
  if (dim == 0) return out;
  for (std::size_t off = 0; off + dim <= payload.size(); off += dim) {
    BitVector v(dim);
    for (std::size_t k = 0; k < dim; ++k)
      if (payload.get(off + k)) v.set(k);
    out.push_back(std::move(v));
  }
  return out;
}

using QCont = std::function<void(std::uint32_t)>;

class Walker {
 public:
  Walker(const ProtocolTree& t, const Dataset& ds, QueryReport& r) : T(t), ds_(ds), rep(r) {}

  std::function<bool(const BitVector&)> final_filter;
  // Evaluate every content against every advice message present at the node.
  bool all_advice = false;

  void pm(std::uint32_t id, double w, double eps, double delta, const TernaryPattern& y, const QCont& cont) {
    const PmParams P = derive_pm(w, eps, delta, T.meta.ov);
    if (P.base_case) return base_pm(id, y, delta, cont);
    const auto samples = carol(id, y.dim());
    auto bob = T.only_child(id);
    visit(bob);
    const std::size_t istar = near_match_index(samples, y, P.h);
    auto next = follow(bob, BitString::from_uint(istar, width_for(P.t + 1)));
    if (!next) return;
    if (istar < samples.size()) {
      const BitVector& X = samples[istar];
      const Recentered yp = recenter(y, X);
      const double wh = w + static_cast<double>(P.h);
      visit(*next);
      auto sqn = follow(*next, tag_bits(Tag::CONTINUE));
      if (!sqn) return;
      QCont after = [&](std::uint32_t nid) {
        base_sq(nid, delta / 10.0, yp.ones, true, cont);
      };
      sq(*sqn, wh, eps / 10.0, delta / 10.0, yp.sq_side, after);
      return;
    }
    const auto S = carol(*next, y.dim());
    auto jb = T.only_child(*next);
    visit(jb);
    std::size_t jstar = S.size();
    for (std::size_t j = 0; j < S.size(); ++j)
      if (static_cast<double>(y.stars().and_count(S[j])) <= 2.0 * w / 3.0) {
        jstar = j;
        break;
      }
    auto c = follow(jb, BitString::from_uint(jstar, width_for(P.halving + 1)));
    if (!c) return;
    if (jstar == S.size()) return cont(*c);
    pm(*c, 2.0 * w / 3.0, eps / 2.0, delta / 10.0, compress(y, S[jstar]), cont);
  }

  void sq(std::uint32_t id, double w, double eps, double delta, const BitVector& y, const QCont& cont) {
    const SqParams P = derive_sq(w, eps, delta, T.meta.ov);
    if (P.base_case) {
      visit(id);
      auto c = follow(id, tag_bits(Tag::CONTINUE));
      if (c) base_sq(*c, P.delta_p, y, false, cont);
      return;
    }
    sq_loop(id, P, 0, w, y, cont);
  }

  void leaf(std::uint32_t id) {
    visit(id);
    ++rep.leaves_visited;
    for (const auto& g : T.leaves[T.node(id).payload]) {
      require(g.guards.size() == stack_.size(), "guard depth mismatch");
      bool ok = true;
      for (std::size_t k = 0; k < g.guards.size() && ok; ++k) ok = !g.guards[k].intersects(stack_[k]);
      if (!ok) continue;
      for (auto i : g.members) {
        ++rep.candidates_scanned;
        rep.candidates.push_back(i);
        if (final_filter(ds_[i])) rep.matches.push_back(i);
        else ++rep.candidates_rejected;
      }
    }
  }

 private:
  void visit(std::uint32_t) { ++rep.nodes_visited; }

  std::optional<std::uint32_t> follow(std::uint32_t id, const BitString& key) {
    auto c = T.child(id, key);
    if (c) rep.bits_walked += key.size();
    return c;
  }

  std::vector<BitVector> carol(std::uint32_t id, std::size_t dim) {
    visit(id);
    return unpack(T.payloads[T.node(id).payload], dim);
  }

  void sq_loop(std::uint32_t id, const SqParams& P, std::uint64_t iter, double wp, const BitVector& y,
               const QCont& cont) {
    visit(id);
    if (iter == P.iter_cap) {
      if (auto c = follow(id, tag_bits(Tag::CONTINUE))) base_sq(*c, P.delta_p, y, false, cont);
      return;
    }
    if (auto c = follow(id, tag_bits(Tag::SMALL))) base_sq(*c, P.delta_p, y, false, cont);
    auto big = follow(id, tag_bits(Tag::BIG));
    if (!big) return;
    const auto samples = carol(*big, y.dim());
    auto bob = T.only_child(*big);
    visit(bob);
    const auto wi = width_for(P.t + 1);
    const std::size_t istar = near_subset_index(samples, y, P.h);
    if (istar < samples.size()) {
      const BitVector& X = samples[istar];
      const BitVector s = X - y;
      auto next = follow(bob, build_detail::class_key(istar, wi, s.popcount(), P.h));
      if (!next) return;
      visit(*next);
      auto c = follow(*next, tag_bits(Tag::CONTINUE));
      if (!c) return;
      const BitVector keep = X.complement();
      stack_.push_back(s);
      sq_loop(*c, P, iter + 1, wp - static_cast<double>(X.and_count(y)), compress(y, keep), cont);
      stack_.pop_back();
      return;
    }
    auto hn = follow(bob, build_detail::class_key(samples.size(), wi, 0, P.h));
    if (!hn) return;
    const auto S = carol(*hn, y.dim());
    auto jb = T.only_child(*hn);
    visit(jb);
    std::size_t jstar = S.size();
    for (std::size_t j = 0; j < S.size(); ++j)
      if (static_cast<double>(y.and_count(S[j])) <= 2.0 * wp / 3.0) {
        jstar = j;
        break;
      }
    auto c = follow(jb, BitString::from_uint(jstar, width_for(P.halving + 1)));
    if (!c) return;
    if (jstar == S.size()) return cont(*c);
    sq(*c, 2.0 * wp / 3.0, P.eps / 2.0, P.delta_p, compress(y, S[jstar]), cont);
  }

  // Merlin node of a subset-query base call. In swapped mode the query side
  // holds the first input and the content is the second.
  void base_sq(std::uint32_t id, double delta, const BitVector& y, bool swapped, const QCont& cont) {
    if (swapped)
      merlin(id, delta, [&](const BitVector&) { return y; }, [&](const BitVector& c) { return y & c; }, cont);
    else
      merlin(id, delta, [](const BitVector& c) { return c; }, [&](const BitVector& c) { return c & y; }, cont);
  }

  void base_pm(std::uint32_t id, const TernaryPattern& y, double delta, const QCont& cont) {
    const BitVector fixed = y.ones();
    const BitVector free = y.stars();
    merlin(id, delta, [](const BitVector& c) { return c; }, [&](const BitVector& c) { return fixed | (c & free); },
           cont);
  }

  // first(c): the first party's parity input for content c.
  // decoded(c): Bob's reconstruction from the special advice for content c.
  template <class First, class Decoded>
  void merlin(std::uint32_t id, double delta, const First& first, const Decoded& decoded, const QCont& cont) {
    visit(id);
    const auto rounds = base_rounds_for(delta, T.meta.ov);
    const auto& nd = T.node(id);
    if (nd.edge_count == 0) return;
    const auto& e0 = T.edges[nd.first_edge];
    const std::size_t dim = e0.key.size();
    const auto rs = unpack(T.payloads[T.node(e0.child).payload], dim);
    auto agree = [&](const BitVector& a, const BitVector& b) {
      for (std::uint64_t i = 0; i < rounds; ++i)
        if (a.dot(rs[i]) != b.dot(rs[i])) return false;
      return true;
    };
    std::vector<BitVector> present;
    if (all_advice) {
      for (std::uint32_t k = 0; k < nd.edge_count; ++k) present.push_back(decoded(T.edges[nd.first_edge + k].key.to_bitvector()));
      std::sort(present.begin(), present.end());
      present.erase(std::unique(present.begin(), present.end()), present.end());
    }
    for (std::uint32_t k = 0; k < nd.edge_count; ++k) {
      const auto& e = T.edges[nd.first_edge + k];
      ++rep.merlin_branches;
      const BitVector c = e.key.to_bitvector();
      const BitVector f = first(c);
      bool ok = agree(f, decoded(c));
      for (std::size_t j = 0; !ok && j < present.size(); ++j) ok = agree(f, present[j]);
      if (!ok) continue;
      rep.bits_walked += e.key.size();
      visit(e.child);
      cont(T.only_child(e.child));
    }
  }

  const ProtocolTree& T;
  const Dataset& ds_;
  QueryReport& rep;
  std::vector<BitVector> stack_;
};

inline void finish(QueryReport& r) {
  std::sort(r.matches.begin(), r.matches.end());
  r.matches.erase(std::unique(r.matches.begin(), r.matches.end()), r.matches.end());
  std::sort(r.candidates.begin(), r.candidates.end());
}

}  // namespace query_detail

inline void check_tree_dataset(const ProtocolTree& t, const Dataset& ds) {
  require(t.meta.dataset_fingerprint == ds.fingerprint(), "tree was built for a different dataset");
}

inline QueryReport query(const ProtocolTree& t, const Dataset& ds, const TernaryPattern& y,
                         const QueryOptions& opt = {}) {
  require(t.meta.protocol == ProtocolKind::PM, "tree was compiled for subset queries");
  require(y.dim() == t.meta.d, "query dimension mismatch");
  require(static_cast<double>(y.star_count()) <= t.meta.w, "query has more stars than the tree supports");
  check_tree_dataset(t, ds);
  QueryReport r;
  if (t.root == ProtocolTree::kNone) return r;
  query_detail::Walker wk(t, ds, r);
  wk.all_advice = opt.all_present_advice;
  wk.final_filter = [&](const BitVector& x) { return match_pm(x, y); };
  query_detail::QCont to_leaf = [&](std::uint32_t id) { wk.leaf(id); };
  wk.pm(t.root, t.meta.w, t.meta.eps, t.meta.delta, y, to_leaf);
  query_detail::finish(r);
  return r;
}

inline QueryReport query(const ProtocolTree& t, const Dataset& ds, const BitVector& y,
                         const QueryOptions& opt = {}) {
  require(t.meta.protocol == ProtocolKind::SQ, "tree was compiled for partial match");
  require(y.dim() == t.meta.d, "query dimension mismatch");
  require(static_cast<double>(y.popcount()) <= t.meta.w, "query has more ones than the tree supports");
  check_tree_dataset(t, ds);
  QueryReport r;
  if (t.root == ProtocolTree::kNone) return r;
  query_detail::Walker wk(t, ds, r);
  wk.all_advice = opt.all_present_advice;
  wk.final_filter = [&](const BitVector& x) { return subset_of(x, y); };
  query_detail::QCont to_leaf = [&](std::uint32_t id) { wk.leaf(id); };
  wk.sq(t.root, t.meta.w, t.meta.eps, t.meta.delta, y, to_leaf);
  query_detail::finish(r);
  return r;
}

// ---------------------------------------------------------------------------
// Serialization: little-endian, magic "PMTREE01".
// ---------------------------------------------------------------------------

namespace ser_detail {

struct Writer {
  std::vector<std::uint8_t> out;
  void u8(std::uint8_t v) { out.push_back(v); }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void f64(double v) {
    std::uint64_t b;
    std::memcpy(&b, &v, sizeof b);
    u64(b);
  }
  void opt(const std::optional<std::uint64_t>& v) {
    u8(v ? 1 : 0);
    u64(v ? *v : 0);
  }
  void bits(const BitString& b) {
    u64(b.size());
    for (std::size_t k = 0; k < (b.size() + 63) / 64; ++k) u64(b.words()[k]);
  }
  void vec(const BitVector& v) {
    u32(static_cast<std::uint32_t>(v.dim()));
    for (auto w : v.words()) u64(w);
  }
};

struct Reader {
  const std::vector<std::uint8_t>& in;
  std::size_t pos = 0;
  void need(std::size_t n) {
    if (pos + n > in.size()) throw usage_error("tree file truncated");
  }
  std::uint8_t u8() {
    need(1);
    return in[pos++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(in[pos++]) << (8 * k);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(in[pos++]) << (8 * k);
    return v;
  }
  double f64() {
    const auto b = u64();
    double v;
    std::memcpy(&v, &b, sizeof v);
    return v;
  }
  std::optional<std::uint64_t> opt() {
    const bool has = u8() != 0;
    const auto v = u64();
    return has ? std::optional<std::uint64_t>(v) : std::nullopt;
  }
  BitString bits() {
    const auto n = u64();
    BitString b;
    std::uint64_t word = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
      if (i % 64 == 0) word = u64();
      b.push_back((word >> (i % 64)) & 1U);
    }
    return b;
  }
  BitVector vec() {
    BitVector v(u32());
    for (auto& w : v.mutable_words()) w = u64();
    return v;
  }
};

inline constexpr char kMagic[8] = {'P', 'M', 'T', 'R', 'E', 'E', '0', '1'};

}  // namespace ser_detail

inline std::vector<std::uint8_t> ProtocolTree::serialize() const {
  ser_detail::Writer w;
  for (char c : ser_detail::kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u8(static_cast<std::uint8_t>(meta.protocol));
  w.u32(meta.d);
  w.u32(meta.n);
  w.f64(meta.w);
  w.f64(meta.eps);
  w.f64(meta.delta);
  w.u64(meta.seed);
  w.opt(meta.ov.t_cap);
  w.f64(meta.ov.base_coeff);
  w.u8(meta.ov.ell ? 1 : 0);
  w.f64(meta.ov.ell ? *meta.ov.ell : 0.0);
  w.opt(meta.ov.t);
  w.opt(meta.ov.h);
  w.opt(meta.ov.halving);
  w.opt(meta.ov.iter_cap);
  w.opt(meta.ov.base_rounds);
  w.u64(meta.dataset_fingerprint);
  w.u64(meta.node_count);
  w.u64(meta.leaf_count);
  w.u64(meta.stored_candidates);
  w.u64(meta.carol_payload_bits);
  w.u64(meta.max_path_bits);
  w.u32(root);

  w.u64(nodes.size());
  for (const auto& nd : nodes) {
    w.u8(static_cast<std::uint8_t>(nd.kind));
    w.u32(nd.first_edge);
    w.u32(nd.edge_count);
    w.u32(nd.payload);
  }
  w.u64(edges.size());
  for (const auto& e : edges) {
    w.bits(e.key);
    w.u32(e.child);
  }
  w.u64(payloads.size());
  for (const auto& p : payloads) w.bits(p);
  w.u64(leaves.size());
  for (const auto& lf : leaves) {
    w.u32(static_cast<std::uint32_t>(lf.size()));
    for (const auto& g : lf) {
      w.u32(static_cast<std::uint32_t>(g.guards.size()));
      for (const auto& v : g.guards) w.vec(v);
      w.u32(static_cast<std::uint32_t>(g.members.size()));
      for (auto m : g.members) w.u32(m);
    }
  }
  return std::move(w.out);
}

inline ProtocolTree ProtocolTree::deserialize(const std::vector<std::uint8_t>& bytes) {
  ser_detail::Reader r{bytes};
  for (char c : ser_detail::kMagic)
    if (r.u8() != static_cast<std::uint8_t>(c)) throw usage_error("not a tree file (bad magic)");
  ProtocolTree t;
  t.meta.protocol = static_cast<ProtocolKind>(r.u8());
  t.meta.d = r.u32();
  t.meta.n = r.u32();
  t.meta.w = r.f64();
  t.meta.eps = r.f64();
  t.meta.delta = r.f64();
  t.meta.seed = r.u64();
  t.meta.ov.t_cap = r.opt();
  t.meta.ov.base_coeff = r.f64();
  const bool has_ell = r.u8() != 0;
  const double ell = r.f64();
  if (has_ell) t.meta.ov.ell = ell;
  t.meta.ov.t = r.opt();
  t.meta.ov.h = r.opt();
  t.meta.ov.halving = r.opt();
  t.meta.ov.iter_cap = r.opt();
  t.meta.ov.base_rounds = r.opt();
  t.meta.dataset_fingerprint = r.u64();
  t.meta.node_count = r.u64();
  t.meta.leaf_count = r.u64();
  t.meta.stored_candidates = r.u64();
  t.meta.carol_payload_bits = r.u64();
  t.meta.max_path_bits = r.u64();
  t.root = r.u32();

  t.nodes.resize(r.u64());
  for (auto& nd : t.nodes) {
    nd.kind = static_cast<NodeKind>(r.u8());
    nd.first_edge = r.u32();
    nd.edge_count = r.u32();
    nd.payload = r.u32();
  }
  const auto ne = r.u64();
  t.edges.reserve(ne);
  for (std::uint64_t k = 0; k < ne; ++k) {
    auto key = r.bits();
    t.edges.push_back(TreeEdge{std::move(key), r.u32()});
  }
  t.payloads.resize(r.u64());
  for (auto& p : t.payloads) p = r.bits();
  t.leaves.resize(r.u64());
  for (auto& lf : t.leaves) {
    lf.resize(r.u32());
    for (auto& g : lf) {
      g.guards.resize(r.u32());
      for (auto& v : g.guards) v = r.vec();
      g.members.resize(r.u32());
      for (auto& m : g.members) m = r.u32();
    }
  }
  if (r.pos != bytes.size()) throw usage_error("trailing bytes in tree file");
  return t;
}

inline void ProtocolTree::save(const std::string& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw usage_error("cannot write tree file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline ProtocolTree ProtocolTree::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw usage_error("cannot open tree file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

// ---------------------------------------------------------------------------
// Parameter presets
// ---------------------------------------------------------------------------

struct PaperParams {
  double eps = 0;
  double delta = 0;
  double w = 0;
  double eps_log2 = 0;  // log2 of eps; -inf when the constants make it degenerate
  bool degenerate = false;
};

// Error parameters of the partial-match data structure with up to c·log n
// wildcards. c1 and c2 are the unnamed constants of the cost bounds.
inline PaperParams paper_params(double n, double c, double c1 = 1.0, double c2 = 1.0) {
  require(n >= 1 && c >= 1, "need n >= 1 and c >= 1");
  PaperParams p;
  const double logn = std::log2(n);
  const double lc = std::log2(c);
  const double lcc = std::log2(c1 * c2);
  const double denom = c * lc * lc * 1e9 * std::pow(c1, 4) * std::pow(c2, 4) * lcc * lcc;
  p.eps_log2 = denom == 0.0 ? -std::numeric_limits<double>::infinity() : -logn / denom;
  p.degenerate = denom == 0.0;
  p.eps = std::exp2(p.eps_log2);
  p.delta = std::pow(n, -1.0 / (100.0 * c1 * c2));
  p.w = c * logn;
  return p;
}

// Hand-tuned parameters for runs at n in the thousands. The base
// coefficient keeps the inner subset query of a partial-match step in its
// base case, which bounds the tree size; t is capped at 16 samples.
inline CompileParams desk_preset(ProtocolKind protocol = ProtocolKind::PM, double w = 32) {
  CompileParams cp;
  cp.protocol = protocol;
  cp.w = w;
  cp.eps = 0.25;
  cp.delta = 0.01;
  cp.ov.base_coeff = 4.0;
  cp.ov.t_cap = 16;
  return cp;
}

}  // namespace pmatch
