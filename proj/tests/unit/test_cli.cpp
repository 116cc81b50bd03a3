#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <sys/wait.h>

#include <json.hpp>

#include "doctest.h"
#include "generators.hpp"
#include "gnnforge/cli.hpp"
#include "gnnforge/partition.hpp"
#include "programs.hpp"

using namespace gnnforge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Captured {
  int code = 0;
  std::string out, err;
};

Captured run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  Captured c;
  c.code = cli::run_cli(args);
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  c.out = out.str();
  c.err = err.str();
  return c;
}

std::string read(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<double> losses(const fs::path& csv) {
  std::istringstream in(read(csv));
  std::string line;
  std::getline(in, line);
  std::vector<double> out;
  while (std::getline(in, line)) out.push_back(std::stod(line.substr(line.find(',') + 1)));
  return out;
}

std::string write_sbm(const std::string& stem) {
  const auto dir = fixtures::temp_dir(stem);
  write_dataset(dir, fixtures::sbm(60, 2, 0.3, 0.02, 16, 1));
  return dir;
}

}  // namespace

TEST_CASE("train on the toy SBM writes metrics and a summary") {
  const auto data = write_sbm("cli-sbm");
  const auto out = data + "/run";
  const auto c = run({"train", "--dataset", data, "--epochs", "200", "--seed", "1", "--out", out});
  REQUIRE(c.code == 0);
  const auto csv = read(out + "/metrics.csv");
  CHECK(csv.rfind("epoch,loss,accuracy,epoch_ms,peak_bytes\n", 0) == 0);
  CHECK(losses(out + "/metrics.csv").size() == 200);
  const auto s = json::parse(read(out + "/summary.json"));
  CHECK(s["mode"] == "Dense");
  CHECK(s["final_accuracy"].get<double>() >= 0.95);
  CHECK(s["phase_used"] == "trivial");
  CHECK(s["epochs"] == 200);
  CHECK(s["ranks"] == 1);
  CHECK(s["peak_bytes"].get<std::size_t>() > 0);
  CHECK(s.contains("largest_allocation"));
  CHECK(s["layer_dims"] == json::array({16, 32, 32, 2}));
  fs::remove_all(data);
}

TEST_CASE("very sparse features select the sparse path") {
  const auto dir = fixtures::temp_dir("cli-sparse");
  DatasetBundle b = fixtures::random_dataset(fixtures::erdos_renyi(100, 0.05, 2), 100, 3, 0.0, 2);
  b.features = FeatureStore(fixtures::features_with_nnz(100, 100, 79, 2));  // s = 0.9921
  write_dataset(dir, b);
  const auto c = run({"train", "--dataset", dir, "--epochs", "3", "--out", dir + "/run"});
  REQUIRE(c.code == 0);
  const auto s = json::parse(read(dir + "/run/summary.json"));
  CHECK(s["mode"] == "Sparse");
  CHECK(s["sparsity"].get<double>() == doctest::Approx(0.9921));
  fs::remove_all(dir);
}

TEST_CASE("two ranks reproduce the single-rank losses") {
  const auto data = write_sbm("cli-ranks");
  REQUIRE(run({"train", "--dataset", data, "--epochs", "15", "--out", data + "/r1"}).code == 0);
  REQUIRE(run({"train", "--dataset", data, "--epochs", "15", "--ranks", "2", "--out", data + "/r2",
               "--cost-model", "1e-6,1e-9,1e9"})
              .code == 0);
  const auto a = losses(data + "/r1/metrics.csv");
  const auto b = losses(data + "/r2/metrics.csv");
  REQUIRE(a.size() == b.size());
  for (std::size_t e = 0; e < a.size(); ++e) CHECK(std::abs(a[e] - b[e]) <= 1e-5 * std::abs(a[e]));
  CHECK(fs::exists(data + "/r2/partition.txt"));
  CHECK(fs::exists(data + "/r2/partition_stats.json"));
  CHECK(read(data + "/r2/cost_model.csv").rfind("rank,predicted_comp_s", 0) == 0);
  const auto s = json::parse(read(data + "/r2/summary.json"));
  CHECK(s["ranks"] == 2);
  CHECK_FALSE(s.contains("largest_allocation"));
  fs::remove_all(data);
}

TEST_CASE("config files are flat and strict") {
  const auto data = write_sbm("cli-config");
  std::ofstream(data + "/good.json") << json{{"dataset", data}, {"epochs", 2}, {"aggregator", "mean"},
                                               {"optimizer", "sgd"}, {"lr", 0.1}, {"out_dir", data + "/cfg"}}
                                                .dump();
  REQUIRE(run({"train", "--config", data + "/good.json"}).code == 0);
  auto s = json::parse(read(data + "/cfg/summary.json"));
  CHECK(s["aggregator"] == "mean");
  CHECK(s["optimizer"] == "sgd");
  CHECK(s["epochs"] == 2);

  // flags win over the file
  REQUIRE(run({"train", "--config", data + "/good.json", "--epochs", "3"}).code == 0);
  CHECK(json::parse(read(data + "/cfg/summary.json"))["epochs"] == 3);

  std::ofstream(data + "/bad.json") << R"({"dataset": "x", "learning_rate": 0.1})";
  const auto bad = run({"train", "--config", data + "/bad.json"});
  CHECK(bad.code == cli::kConfigError);
  CHECK(bad.err.find("learning_rate") != std::string::npos);
  CHECK(run({"train", "--dataset", data, "--aggregator", "median"}).code == cli::kConfigError);
  CHECK(run({"train", "--dataset", data, "--lr", "-1"}).code == cli::kConfigError);
  CHECK(run({"train", "--dataset", data + "/missing"}).code == cli::kIoError);
  CHECK(run({"train", "--no-such-flag"}).code == cli::kConfigError);
  fs::remove_all(data);
}

TEST_CASE("partition command") {
  const auto dir = fixtures::temp_dir("cli-part");
  write_edge_list(dir + "/cliques.txt", fixtures::disjoint_cliques({20, 20}));
  write_edge_list(dir + "/star.txt", fixtures::star(99));
  REQUIRE(run({"partition", "--edges", dir + "/cliques.txt", "--num-nodes", "40", "-k", "2", "--out", dir + "/c"})
              .code == 0);
  CHECK(json::parse(read(dir + "/c/partition_stats.json"))["edge_cut"] == 0);
  REQUIRE(run({"partition", "--edges", dir + "/star.txt", "--num-nodes", "100", "-k", "4", "--out", dir + "/s"})
              .code == 0);
  CHECK(json::parse(read(dir + "/s/partition_stats.json"))["phase_used"] == "greedy");
  REQUIRE(run({"partition", "--edges", dir + "/star.txt", "--num-nodes", "100", "-k", "1", "--out", dir + "/t"})
              .code == 0);
  const auto trivial = load_partition(dir + "/t/partition.txt", 1);
  CHECK(std::all_of(trivial.assign.begin(), trivial.assign.end(), [](auto r) { return r == 0; }));
  CHECK(run({"partition", "--edges", dir + "/star.txt", "-k", "2"}).code == cli::kConfigError);
  CHECK(run({"partition", "--edges", dir + "/nope.txt", "--num-nodes", "3", "-k", "2"}).code == cli::kIoError);
  fs::remove_all(dir);
}

TEST_CASE("compile emits a plan that trains like the direct configuration") {
  const auto data = write_sbm("cli-compile");
  std::ofstream(data + "/sage.mgl") << fixtures::kSageProgram;
  const auto c = run({"compile", data + "/sage.mgl", "--neurons", "16,32,32,2", "--dataset", data, "--epochs", "10",
                      "--out", data + "/plan.json"});
  REQUIRE(c.code == 0);
  const auto plan = json::parse(read(data + "/plan.json"));
  CHECK(plan["num_layers"] == 3);
  CHECK(plan["aggregator"] == "max");
  CHECK(plan["epochs"] == 10);

  REQUIRE(run({"train", "--plan", data + "/plan.json", "--out", data + "/via-plan"}).code == 0);
  REQUIRE(run({"train", "--dataset", data, "--layers", "16,32,32,2", "--aggregator", "max", "--optimizer", "adam",
               "--lr", "0.01", "--epochs", "10", "--out", data + "/direct"})
              .code == 0);
  CHECK(losses(data + "/via-plan/metrics.csv") == losses(data + "/direct/metrics.csv"));
  fs::remove_all(data);
}

TEST_CASE("compile errors carry file, line and column") {
  const auto dir = fixtures::temp_dir("cli-bad-src");
  std::ofstream(dir + "/bad.mgl") << fixtures::malformed_programs().front().source;
  const auto c = run({"compile", dir + "/bad.mgl", "--neurons", "4,2", "--epochs", "1"});
  CHECK(c.code == cli::kCompileError);
  CHECK(c.err.find(dir + "/bad.mgl:3:") != std::string::npos);
  CHECK(run({"compile", dir + "/missing.mgl"}).code == cli::kIoError);
  fs::remove_all(dir);
}

TEST_CASE("bench-gamma and stats") {
  const auto dir = write_sbm("cli-bench");
  const auto b = run({"bench-gamma", "--quick", "--repeats", "3", "--out", dir + "/calibration.json"});
  REQUIRE(b.code == 0);
  const auto cal = json::parse(read(dir + "/calibration.json"));
  CHECK(cal["tau"].get<double>() == doctest::Approx(1.0 - cal["gamma"].get<double>()));
  write_partition(dir + "/p.txt", random_balanced_partition(60, 2, 1));
  const auto s = run({"stats", "--dataset", dir, "--calibration", dir + "/calibration.json", "--partition",
                      dir + "/p.txt", "--k", "2"});
  REQUIRE(s.code == 0);
  const auto j = json::parse(s.out);
  CHECK(j["nodes"] == 60);
  const bool sparse = j["sparsity"].get<double>() >= cal["tau"].get<double>() && cal["tau"].get<double>() < 1.0;
  CHECK(j["mode"] == (sparse ? "Sparse" : "Dense"));
  CHECK(j["tau"].get<double>() == doctest::Approx(cal["tau"].get<double>()));
  CHECK(j["partition"]["vertex_counts"] == json::array({30, 30}));
  CHECK(run({"stats", "--dataset", dir, "--partition", dir + "/p.txt"}).code == cli::kConfigError);
  fs::remove_all(dir);
}

TEST_CASE("the installed binary reports exit codes") {
  const std::string bin = GNNFORGE_CLI_PATH;
  CHECK(std::system((bin + " --help > /dev/null").c_str()) == 0);
  const int rc = std::system((bin + " train --dataset /nonexistent/path > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(rc) == cli::kIoError);
}
