#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "catch_amalgamated.hpp"
#include "pmatch/bench.hpp"

using namespace pmatch;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

// Runs the CLI with stdout captured to a file.
Run cli(const std::string& args) {
  const fs::path out = fs::temp_directory_path() / "pmatch_cli_out.txt";
  const std::string cmd = std::string(PMATCH_CLI) + " " + args + " > " + out.string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WEXITSTATUS(status), ss.str()};
}

fs::path scratch() {
  const fs::path dir = fs::temp_directory_path() / "pmatch_bench_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("random subset instances put the special point inside y") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto ins = gen_random_sq(20, 200, 0.2, 0.5, s);
    REQUIRE(ins.dataset.size() == 20);
    const auto& special = ins.dataset[ins.planted[0]];
    REQUIRE(subset_of(special, ins.sq_queries[0]));
    REQUIRE(std::binary_search(ins.truth[0].begin(), ins.truth[0].end(), ins.planted[0]));
  }
  CHECK_THROWS_AS(gen_random_sq(5, 10, 0.6, 0.5, 1), usage_error);
}

TEST_CASE("per-coordinate joint law of a random subset instance") {
  RandomLawConfig c;
  c.instances = 40;
  c.d = 500;
  const auto r = run_random_law(c);
  CHECK(r.checks["chi2_p_value"]["pass"].get<bool>());
  CHECK(r.checks["special_point_subset"]["pass"].get<bool>());
  CHECK(r.rows[0]["y0_x1"].get<std::uint64_t>() == 0);
}

TEST_CASE("no other subset point in the uniqueness regime") {
  // w_u (1 - w_q) = 0.2 > 2/c with c = 12; d = c log2 n for n = 64.
  const std::size_t n = 64, d = 72;
  int with_other = 0;
  const int reps = 300;
  for (int k = 0; k < reps; ++k) {
    const auto ins = gen_random_sq(n, d, 0.4, 0.5, 1000 + static_cast<std::uint64_t>(k));
    with_other += ins.truth[0].size() > 1 ? 1 : 0;
  }
  // Bound per instance: n (1 - 0.2)^d, far below 1/n.
  CHECK(static_cast<double>(with_other) / reps <= 1.0 / n);
}

TEST_CASE("planted instances are reproducible") {
  const auto a = gen_planted(100, 20, 5, 10, 3);
  const auto b = gen_planted(100, 20, 5, 10, 3);
  CHECK(a.truth == b.truth);
  std::vector<std::size_t> ma, mb;
  for (const auto& t : a.truth) ma.push_back(t.size());
  for (const auto& t : b.truth) mb.push_back(t.size());
  CHECK(ma == mb);
}

TEST_CASE("reports carry schema, params and replay seeds") {
  ExactnessConfig c;
  c.instances = 3;
  c.queries_per_instance = 5;
  c.n = 128;
  const auto r = run_exactness(c);
  CHECK(r.checks["all_queries_exact"]["pass"].get<bool>());
  CHECK_FALSE(r.checks["query_count"]["pass"].get<bool>());
  const auto j = r.to_json();
  CHECK(j["schema"] == kReportSchema);
  CHECK(j["params"]["seed"] == 1);
  CHECK(j["rows"].size() == 15);
  CHECK(j["rows"][0].contains("instance_seed"));
  std::ostringstream csv;
  r.write_csv(csv);
  CHECK(csv.str().rfind("# schema=pmatch-report/1 experiment=exactness", 0) == 0);
}

TEST_CASE("golden transcripts are reproducible") {
  const auto a = golden_transcripts();
  const auto b = golden_transcripts();
  REQUIRE(a.size() == 5);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);
}

TEST_CASE("cli: generate, build and query reproduce the planted truth") {
  const auto dir = scratch();
  const auto data = (dir / "data.txt").string(), qs = (dir / "q.txt").string(), tree = (dir / "tree.bin").string();
  REQUIRE(cli("--seed 5 gen --kind planted --n 1024 --d 64 --w 16 --queries 20 --data " + data + " --out-queries " + qs)
              .code == 0);
  const auto b = cli("--seed 5 --json build --data " + data + " --out " + tree + " --w 16");
  REQUIRE(b.code == 0);
  CHECK(nlohmann::json::parse(b.out)["node_count"].get<std::uint64_t>() > 0);
  const auto q = cli("--json query --tree " + tree + " --data " + data + " --queries " + qs);
  REQUIRE(q.code == 0);
  const auto rows = nlohmann::json::parse(q.out)["rows"];
  const auto ins = gen_planted(1024, 64, 16, 20, 5);
  REQUIRE(rows.size() == 20);
  for (std::size_t k = 0; k < 20; ++k) {
    std::string want;
    for (auto i : ins.truth[k]) want += (want.empty() ? "" : " ") + std::to_string(i);
    REQUIRE(rows[k]["matches"].get<std::string>() == want);
  }
}

TEST_CASE("cli: base protocol rate at four rounds") {
  const auto r = cli("--json --trials 100000 sim --protocol base --t 4 --d 16");
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  bool seen = false;
  for (const auto& row : j["rows"]) {
    if (row["advice"] != "fixed-unequal-pair") continue;
    seen = true;
    const double p = 1.0 / 16;
    CHECK(std::fabs(row["accept_rate"].get<double>() - p) <= 3 * std::sqrt(p * (1 - p) / 100000));
  }
  CHECK(seen);
  CHECK(j["checks"]["special_accept_rate"]["pass"].get<bool>());
}

TEST_CASE("cli: scan counts grow with n") {
  const auto r = cli("--json bench --sweep-n 256,1024,4096 --queries 100");
  REQUIRE(r.code == 0);
  const auto rows = nlohmann::json::parse(r.out)["rows"];
  REQUIRE(rows.size() == 3);
  for (std::size_t k = 1; k < rows.size(); ++k)
    CHECK(rows[k]["mean_scanned"].get<double>() >= rows[k - 1]["mean_scanned"].get<double>());
  const auto csv = cli("bench --sweep-n 256,1024 --queries 20");
  CHECK(csv.out.rfind("# schema=", 0) == 0);
}

TEST_CASE("cli: usage errors") {
  CHECK(cli("").code != 0);
  CHECK(cli("frobnicate").code != 0);
  const auto help = cli("build --help");
  CHECK(help.code == 0);
  CHECK(help.out.find("--data") != std::string::npos);
  CHECK(cli("build --data /nonexistent/file.txt").code != 0);
  const auto j = cli("--json build --data /nonexistent/file.txt");
  CHECK(j.code == 2);
  const auto err = nlohmann::json::parse(j.out);
  CHECK(err["error"]["type"] == "usage");
  const auto bad = cli("--json sim --protocol base --eps 0.7");
  CHECK(bad.code == 2);
  CHECK(nlohmann::json::parse(bad.out)["error"]["type"] == "usage");
}

TEST_CASE("cli: node ceiling surfaces as a sizing error") {
  const auto dir = scratch();
  const auto data = (dir / "ceil.txt").string();
  REQUIRE(cli("gen --kind uniform --n 512 --d 64 --data " + data + " --out-queries " + (dir / "cq.txt").string()).code == 0);
  const auto r = cli("--json --node-ceiling 100 build --data " + data + " --out " + (dir / "t.bin").string());
  CHECK(r.code == 3);
  CHECK(nlohmann::json::parse(r.out)["error"]["type"] == "sizing");
}
