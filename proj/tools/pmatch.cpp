// pmatch: instance generation, tree building, queries and experiment runs.

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "pmatch/bench.hpp"

using namespace pmatch;
using ojson = nlohmann::ordered_json;

namespace {

enum class Format { TEXT, JSON, CSV };

struct Globals {
  std::uint64_t seed = 1;
  std::string params_file;
  std::optional<std::uint64_t> cap_t;
  std::uint64_t node_ceiling = BuildOptions{}.node_ceiling;
  bool json = false;
  bool csv = false;
  std::optional<std::uint64_t> trials;
  Format format() const { return json ? Format::JSON : csv ? Format::CSV : Format::TEXT; }
};

void emit(const Report& r, Format f) {
  if (f == Format::JSON) {
    std::cout << r.to_json().dump(2) << '\n';
    return;
  }
  r.write_csv(std::cout);
  if (f == Format::TEXT) {
    std::cout << "# aggregates " << r.aggregates.dump() << '\n';
    for (auto it = r.checks.begin(); it != r.checks.end(); ++it)
      std::cout << "# check " << it.key() << ' ' << (it.value()["pass"].get<bool>() ? "pass" : "FAIL") << ' '
                << it.value().dump() << '\n';
  }
}

// Compile parameters: preset, then params file, then explicit flags.
struct BuildFlags {
  std::string preset = "desk";
  std::string protocol = "pm";
  std::optional<double> w, eps, delta, base_coeff, c, c1, c2;
};

CompileParams resolve_params(const BuildFlags& f, const Globals& g, std::size_t n) {
  require(f.protocol == "pm" || f.protocol == "sq", "--protocol must be pm or sq");
  const ProtocolKind kind = f.protocol == "pm" ? ProtocolKind::PM : ProtocolKind::SQ;
  CompileParams cp;
  if (f.preset == "desk") {
    cp = desk_preset(kind, f.w.value_or(32));
  } else if (f.preset == "paper") {
    require(f.c.has_value(), "--preset paper needs --c");
    const PaperParams pp = paper_params(static_cast<double>(std::max<std::size_t>(n, 1)), *f.c, f.c1.value_or(1.0),
                                        f.c2.value_or(1.0));
    cp.protocol = kind;
    cp.w = pp.w;
    cp.eps = pp.eps;
    cp.delta = pp.delta;
  } else {
    throw usage_error("--preset must be desk or paper");
  }
  if (!g.params_file.empty()) {
    std::ifstream in(g.params_file);
    if (!in) throw usage_error("cannot open params file " + g.params_file);
    ojson j;
    try {
      j = ojson::parse(in);
    } catch (const std::exception& e) {
      throw usage_error(std::string("bad params file: ") + e.what());
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const auto& v = it.value();
      if (k == "w") cp.w = v.get<double>();
      else if (k == "eps") cp.eps = v.get<double>();
      else if (k == "delta") cp.delta = v.get<double>();
      else if (k == "base_coeff") cp.ov.base_coeff = v.get<double>();
      else if (k == "t_cap") cp.ov.t_cap = v.get<std::uint64_t>();
      else if (k == "ell") cp.ov.ell = v.get<double>();
      else if (k == "t") cp.ov.t = v.get<std::uint64_t>();
      else if (k == "h") cp.ov.h = v.get<std::uint64_t>();
      else if (k == "halving") cp.ov.halving = v.get<std::uint64_t>();
      else if (k == "iter_cap") cp.ov.iter_cap = v.get<std::uint64_t>();
      else if (k == "base_rounds") cp.ov.base_rounds = v.get<std::uint64_t>();
      else throw usage_error("unknown key in params file: " + k);
    }
  }
  if (f.w) cp.w = *f.w;
  if (f.eps) cp.eps = *f.eps;
  if (f.delta) cp.delta = *f.delta;
  if (f.base_coeff) cp.ov.base_coeff = *f.base_coeff;
  if (g.cap_t) cp.ov.t_cap = *g.cap_t;
  validate_error_params(cp.eps, cp.delta);
  return cp;
}

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw usage_error("bad list element: " + item);
    }
  }
  require(!out.empty(), "empty list");
  return out;
}

int run(int argc, char** argv, Globals& g) {
  CLI::App app{"Partial-match data structure and protocol simulator"};
  app.require_subcommand(1);
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--params-file", g.params_file, "JSON file with compile parameters")->check(CLI::ExistingFile);
  app.add_option("--cap-t", g.cap_t, "Cap on samples per round");
  app.add_option("--node-ceiling", g.node_ceiling, "Abort a build past this many tree nodes");
  auto* fj = app.add_flag("--json", g.json, "JSON output");
  auto* fc = app.add_flag("--csv", g.csv, "CSV output");
  fj->excludes(fc);
  app.add_option("--trials", g.trials, "Trial count");
  app.fallthrough();

  // gen
  auto* gen = app.add_subcommand("gen", "Write an instance: dataset file plus query file");
  std::string kind = "planted", data_out = "data.txt", query_out = "queries.txt";
  std::size_t n = 1024, d = 64, w = 16, n_queries = 40;
  double density = 0.5, w_u = 0.2, w_q = 0.5;
  gen->add_option("--kind", kind, "planted, uniform or random-sq")->check(CLI::IsMember({"planted", "uniform", "random-sq"}));
  gen->add_option("--n", n);
  gen->add_option("--d", d);
  gen->add_option("--w", w, "Stars per planted query");
  gen->add_option("--queries", n_queries);
  gen->add_option("--density", density);
  gen->add_option("--w-u", w_u);
  gen->add_option("--w-q", w_q);
  gen->add_option("--data", data_out);
  gen->add_option("--out-queries", query_out);

  // build
  auto* build = app.add_subcommand("build", "Preprocess a dataset into a tree file");
  BuildFlags bf;
  std::string data_in, tree_path = "tree.bin";
  build->add_option("--data", data_in)->required();
  build->add_option("--out", tree_path);
  build->add_option("--preset", bf.preset, "desk or paper");
  build->add_option("--protocol", bf.protocol, "pm or sq");
  build->add_option("--w", bf.w);
  build->add_option("--eps", bf.eps);
  build->add_option("--delta", bf.delta);
  build->add_option("--base-coeff", bf.base_coeff);
  build->add_option("--c", bf.c, "Wildcard factor for the paper preset (w = c log2 n)");
  build->add_option("--c1", bf.c1);
  build->add_option("--c2", bf.c2);

  // query
  auto* qry = app.add_subcommand("query", "Answer queries against a tree file");
  std::string q_tree, q_data, q_file;
  bool all_advice = false;
  qry->add_option("--tree", q_tree)->required();
  qry->add_option("--data", q_data)->required();
  qry->add_option("--queries", q_file)->required();
  qry->add_flag("--all-advice", all_advice, "Follow every present advice branch");

  // sim
  auto* sim = app.add_subcommand("sim", "Run one protocol standalone");
  SimConfig sc;
  std::optional<std::uint64_t> sim_t;
  sim->add_option("--protocol", sc.protocol)->check(CLI::IsMember({"base", "sq", "pm"}));
  sim->add_option("--t", sim_t, "Parity rounds of the base protocol");
  sim->add_option("--d", sc.d);
  sim->add_option("--n", sc.n);
  sim->add_option("--w", sc.w);
  sim->add_option("--eps", sc.eps);
  sim->add_option("--delta", sc.delta);

  // fix-seed
  auto* fix = app.add_subcommand("fix-seed", "Fix the randomness of the disjointness protocol");
  FixSeedConfig fc_cfg;
  fix->add_option("--d", fc_cfg.d);
  fix->add_option("--eps", fc_cfg.eps);
  fix->add_option("--n", fc_cfg.n);
  fix->add_option("--candidates", fc_cfg.candidates);

  // bench
  auto* bench = app.add_subcommand("bench", "Scan-count sweep over n");
  ScalingConfig bc;
  std::string sweep = "256,1024,4096,16384";
  bench->add_option("--sweep-n", sweep, "Comma-separated dataset sizes");
  bench->add_option("--d", bc.d);
  bench->add_option("--w", bc.w);
  bench->add_option("--queries", bc.queries);
  bench->add_option("--eps-exp", bc.eps_exp, "eps = n^-x instead of the fixed desk value");
  bench->add_option("--delta-exp", bc.delta_exp, "delta = n^-x instead of the fixed desk value");

  // verify
  auto* verify = app.add_subcommand("verify", "Run the acceptance criteria");
  std::string only;
  std::string golden_dir = "tests/golden";
  verify->add_option("--only", only, "Comma-separated criterion numbers");
  verify->add_option("--golden-dir", golden_dir);

  // golden
  auto* golden = app.add_subcommand("golden", "Write the fixed-seed transcript files");
  std::string golden_out = "tests/golden";
  golden->add_option("--out-dir", golden_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);  // --help, --help-all
  }
  const Format fmt = g.format();

  if (*gen) {
    Instance ins;
    if (kind == "planted") {
      ins = gen_planted(n, d, w, n_queries, g.seed, density);
    } else if (kind == "uniform") {
      ins.kind = "uniform";
      ins.dataset = gen_uniform(n, d, density, g.seed);
      InstanceRng rng(g.seed + 1);
      for (std::size_t q = 0; q < n_queries; ++q) ins.pm_queries.push_back(random_pattern(rng, d, w));
    } else {
      ins = gen_random_sq(n, d, w_u, w_q, g.seed);
    }
    save_instance(ins, data_out, query_out);
    ojson j = {{"kind", ins.kind}, {"n", ins.dataset.size()}, {"d", ins.dataset.dim()}, {"seed", g.seed},
               {"queries", ins.pm_queries.size() + ins.sq_queries.size()}, {"data", data_out},
               {"query_file", query_out}, {"fingerprint", ins.dataset.fingerprint()}};
    std::cout << (fmt == Format::JSON ? j.dump(2) : j.dump()) << '\n';
    return 0;
  }
  if (*build) {
    const Dataset ds = Dataset::load(data_in);
    const CompileParams cp = resolve_params(bf, g, ds.size());
    const auto t0 = std::chrono::steady_clock::now();
    const ProtocolTree tree = preprocess(ds, cp, g.seed, BuildOptions{g.node_ceiling});
    const double secs = seconds_since(t0);
    tree.save(tree_path);
    const auto& m = tree.meta;
    ojson j = {{"tree", tree_path}, {"compile", compile_params_json(cp)}, {"seed", g.seed}, {"n", m.n},
               {"d", m.d}, {"node_count", m.node_count}, {"leaf_count", m.leaf_count},
               {"stored_candidates", m.stored_candidates}, {"carol_payload_bits", m.carol_payload_bits},
               {"max_path_bits", m.max_path_bits}, {"bytes", std::filesystem::file_size(tree_path)},
               {"build_seconds", secs}};
    std::cout << (fmt == Format::JSON ? j.dump(2) : j.dump()) << '\n';
    return 0;
  }
  if (*qry) {
    const ProtocolTree tree = ProtocolTree::load(q_tree);
    const Dataset ds = Dataset::load(q_data);
    const auto qs = load_queries(q_file);
    Report r;
    r.experiment = "query";
    r.params = {{"tree", q_tree}, {"data", q_data}, {"queries", q_file}, {"all_advice", all_advice},
                {"tree_seed", tree.meta.seed}};
    QueryOptions opt;
    opt.all_present_advice = all_advice;
    for (std::size_t k = 0; k < qs.size(); ++k) {
      const QueryReport qr = tree.meta.protocol == ProtocolKind::PM ? query(tree, ds, qs[k], opt)
                                                                    : query(tree, ds, qs[k].ones(), opt);
      std::string ms;
      for (auto i : qr.matches) ms += (ms.empty() ? "" : " ") + std::to_string(i);
      r.add_row({{"query", k}, {"matches", ms}, {"match_count", qr.matches.size()},
                 {"candidates", qr.candidates.size()}, {"leaves_visited", qr.leaves_visited},
                 {"candidates_scanned", qr.candidates_scanned}, {"candidates_rejected", qr.candidates_rejected},
                 {"bits_walked", qr.bits_walked}, {"nodes_visited", qr.nodes_visited},
                 {"merlin_branches", qr.merlin_branches}});
    }
    r.aggregate("candidates_scanned");
    emit(r, fmt);
    return 0;
  }
  if (*sim) {
    sc.t = sim_t;
    sc.seed = g.seed;
    if (g.trials) sc.trials = *g.trials;
    if (g.cap_t) sc.ov.t_cap = *g.cap_t;
    emit(run_sim(sc), fmt);
    return 0;
  }
  if (*fix) {
    fc_cfg.seed = g.seed;
    if (g.trials) fc_cfg.trials = *g.trials;
    emit(run_fix_seed(fc_cfg), fmt);
    return 0;
  }
  if (*bench) {
    bc.ns = parse_list(sweep);
    bc.seed = g.seed;
    const Report r = run_scaling(bc);
    emit(r, g.json ? Format::JSON : Format::CSV);
    return 0;
  }
  if (*verify) {
    std::vector<std::size_t> pick = only.empty() ? std::vector<std::size_t>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}
                                                 : parse_list(only);
    int failed = 0;
    ojson all = ojson::array();
    for (auto k : pick) {
      Report r;
      switch (k) {
        case 1: r = run_exactness({}); break;
        case 2: r = run_base_rate({}); break;
        case 3: r = run_one_sided({}); break;
        case 4: r = run_soundness({}); break;
        case 5: r = run_false_positive({}); break;
        case 6: r = run_disjointness({}); break;
        case 7: r = run_fix_seed({}); break;
        case 8: r = run_random_law({}); break;
        case 9: r = run_scaling({}); break;
        case 10: {
          DeterminismConfig c;
          c.golden_dir = golden_dir;
          r = run_determinism(c);
          break;
        }
        default: throw usage_error("criteria are numbered 1 to 10");
      }
      failed += r.passed() ? 0 : 1;
      if (fmt == Format::JSON) all.push_back(r.to_json(false));
      else std::cout << (r.passed() ? "PASS " : "FAIL ") << k << ' ' << r.experiment << ' ' << r.checks.dump() << '\n';
    }
    if (fmt == Format::JSON) std::cout << all.dump(2) << '\n';
    return failed ? 1 : 0;
  }
  if (*golden) {
    std::filesystem::create_directories(golden_out);
    for (const auto& [name, text] : golden_transcripts()) {
      const std::string path = golden_out + "/" + name + ".txt";
      std::ofstream out(path, std::ios::binary);
      if (!out) throw usage_error("cannot write " + path);
      out << text;
      std::cout << path << '\n';
    }
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Globals g;
  bool json = false;
  for (int i = 1; i < argc; ++i) json = json || std::string(argv[i]) == "--json";
  auto fail = [&](const char* type, const std::string& msg, int code) {
    if (json) std::cout << ojson{{"error", {{"type", type}, {"message", msg}, {"exit_code", code}}}}.dump() << '\n';
    else std::cerr << "pmatch: " << msg << '\n';
    return code;
  };
  try {
    return run(argc, argv, g);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;
    return fail("usage", e.what(), 2);
  } catch (const usage_error& e) {
    return fail("usage", e.what(), 2);
  } catch (const sizing_error& e) {
    return fail("sizing", e.what(), 3);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 1);
  }
}
