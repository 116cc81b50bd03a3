#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "generators.hpp"
#include "gnnforge/errors.hpp"
#include "gnnforge/partition.hpp"
#include "oracles.hpp"

using namespace gnnforge;

namespace {

// Independent recount of cut edges (unordered pairs) and halos.
std::size_t brute_cut(const CsrGraph& g, const PartitionMap& m) {
  std::set<std::pair<NodeId, NodeId>> pairs;
  for (NodeId u = 0; u < g.num_nodes; ++u)
    for (NodeId v : g.neighbors(u))
      if (m.assign[u] != m.assign[v]) pairs.emplace(std::min(u, v), std::max(u, v));
  return pairs.size();
}

std::vector<std::size_t> greedy_oracle(const CsrGraph& g, std::size_t k) {
  std::vector<NodeId> order(g.num_nodes);
  for (NodeId v = 0; v < g.num_nodes; ++v) order[v] = v;
  std::stable_sort(order.begin(), order.end(), [&](NodeId a, NodeId b) { return g.degree(a) > g.degree(b); });
  std::vector<std::size_t> load(k, 0), assign(g.num_nodes);
  for (NodeId v : order) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < k; ++r)
      if (load[r] < load[best]) best = r;
    assign[v] = best;
    load[best] += g.degree(v) + 1;
  }
  return assign;
}

PartitionOptions opts(std::size_t k) {
  PartitionOptions o;
  o.k = k;
  return o;
}

}  // namespace

TEST_CASE("k = 1 is the trivial map") {
  const auto r = partition_hierarchical(fixtures::barabasi_albert(50, 2, 1), opts(1));
  CHECK(r.phase == PartitionPhase::Trivial);
  CHECK(r.stats.edge_cut == 0);
  CHECK(std::all_of(r.map.assign.begin(), r.map.assign.end(), [](auto a) { return a == 0; }));
}

TEST_CASE("an 8-ring bisects with the optimal cut of 2") {
  const auto m = multilevel_kway(fixtures::ring(8), opts(2));
  REQUIRE(m.has_value());
  CHECK(evaluate_partition(fixtures::ring(8), *m).edge_cut == 2);
}

TEST_CASE("two cliques joined by a bridge split on the bridge") {
  const auto g = fixtures::bridge_of_cliques(10, 10);
  const auto r = partition_hierarchical(g, opts(2));
  CHECK(r.phase == PartitionPhase::Multilevel);
  CHECK(r.stats.edge_cut == 1);
}

TEST_CASE("two disjoint cliques land on separate ranks") {
  const auto g = fixtures::disjoint_cliques({50, 50});
  const auto r = partition_hierarchical(g, opts(2));
  CHECK(r.stats.edge_cut == 0);
  CHECK(r.stats.vertex_counts == std::vector<std::size_t>{50, 50});
}

TEST_CASE("power-law graph beats random balanced partitions") {
  const auto g = fixtures::barabasi_albert(1000, 3, 7);
  const auto m = multilevel_kway(g, opts(4));
  REQUIRE(m.has_value());
  double mean = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) mean += evaluate_partition(g, random_balanced_partition(1000, 4, s)).edge_cut;
  mean /= 50.0;
  CHECK(double(evaluate_partition(g, *m).edge_cut) < mean);
}

TEST_CASE("a heavy hub makes Phase I infeasible and falls back") {
  const auto g = fixtures::star(999);
  CHECK_FALSE(multilevel_kway(g, opts(4)).has_value());
  CHECK_FALSE(recursive_bisection(g, opts(4)).has_value());
  const auto r = partition_hierarchical(g, opts(4));
  CHECK(r.phase == PartitionPhase::Greedy);
}

TEST_CASE("components with a dominant hub use bin packing") {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (std::uint32_t v = 1; v <= 300; ++v) pairs.emplace_back(0, v);
  for (std::uint32_t t = 0; t < 3; ++t) {
    const std::uint32_t b = 301 + 3 * t;
    pairs.emplace_back(b, b + 1);
    pairs.emplace_back(b + 1, b + 2);
    pairs.emplace_back(b, b + 2);
  }
  const auto g = fixtures::symmetric(310, pairs);
  const auto r = partition_hierarchical(g, opts(4));
  CHECK(r.phase == PartitionPhase::Components);
  CHECK(r.stats.edge_cut == 0);
}

TEST_CASE("greedy partition follows the degree rule exactly") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto g = fixtures::barabasi_albert(200, 2, seed);
    const auto m = greedy_degree_partition(g, 3);
    const auto want = greedy_oracle(g, 3);
    for (std::size_t v = 0; v < g.num_nodes; ++v) CHECK(m.assign[v] == want[v]);
    const auto s = evaluate_partition(g, m);
    std::size_t max_w = 0;
    for (std::size_t v = 0; v < g.num_nodes; ++v) max_w = std::max(max_w, g.degree(v) + 1);
    const auto [lo, hi] = std::minmax_element(s.degree_loads.begin(), s.degree_loads.end());
    CHECK(*hi - *lo <= max_w);
  }
}

TEST_CASE("greedy on small fixtures") {
  const auto iso = greedy_degree_partition(CsrGraph(4), 2);
  CHECK(evaluate_partition(CsrGraph(4), iso).vertex_counts == std::vector<std::size_t>{2, 2});
  const auto s = fixtures::star(9);
  const auto m = greedy_degree_partition(s, 2);
  const auto st = evaluate_partition(s, m);
  const auto diff = st.degree_loads[0] > st.degree_loads[1] ? st.degree_loads[0] - st.degree_loads[1]
                                                            : st.degree_loads[1] - st.degree_loads[0];
  CHECK(diff <= 10);
}

TEST_CASE("best-fit decreasing bin packing") {
  CHECK(binpack_sizes({5, 5, 5, 5}, 2) == std::vector<std::uint32_t>{0, 1, 0, 1});
  const auto r = binpack_sizes({7, 3, 3, 3}, 2);
  CHECK(r == std::vector<std::uint32_t>{0, 1, 1, 1});
  CHECK(binpack_sizes({10}, 4) == std::vector<std::uint32_t>{0});
}

TEST_CASE("components match a union-find oracle") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto g = fixtures::random_directed(80, 60, seed);
    const auto comp = find_components(g);
    oracle::UnionFind uf(80);
    for (NodeId u = 0; u < 80; ++u)
      for (NodeId v : g.neighbors(u)) uf.unite(u, v);
    for (NodeId a = 0; a < 80; ++a)
      for (NodeId b = a + 1; b < 80; ++b) CHECK((comp[a] == comp[b]) == (uf.find(a) == uf.find(b)));
    std::uint32_t next = 0;  // ids dense and ordered by first-seen node
    for (auto c : comp) {
      CHECK(c <= next);
      if (c == next) ++next;
    }
  }
  CHECK(find_components(fixtures::disjoint_cliques({3, 3})) == std::vector<std::uint32_t>{0, 0, 0, 1, 1, 1});
  const auto ring = find_components(fixtures::ring(6));
  CHECK(std::all_of(ring.begin(), ring.end(), [](auto c) { return c == 0; }));
}

TEST_CASE("evaluate_partition matches a brute-force recount") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto g = fixtures::random_directed(60, 300, seed);
    const auto m = random_balanced_partition(60, 3, seed);
    const auto s = evaluate_partition(g, m);
    CHECK(s.edge_cut == brute_cut(g, m));
    std::vector<std::size_t> counts(3, 0), loads(3, 0);
    std::vector<std::vector<std::set<NodeId>>> halo(3, std::vector<std::set<NodeId>>(3));
    for (NodeId u = 0; u < 60; ++u) {
      ++counts[m.assign[u]];
      loads[m.assign[u]] += g.degree(u) + 1;
      for (NodeId v : g.neighbors(u))
        if (m.assign[v] != m.assign[u]) halo[m.assign[u]][m.assign[v]].insert(v);
    }
    CHECK(s.vertex_counts == counts);
    CHECK(s.degree_loads == loads);
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t r = 0; r < 3; ++r) CHECK(s.halo[p][r] == halo[p][r].size());
    double mean = 20.0, var = 0.0;
    for (auto c : counts) var += (double(c) - mean) * (double(c) - mean);
    CHECK(s.size_variance == doctest::Approx(var));
  }
}

TEST_CASE("partitioning is deterministic") {
  const auto g = fixtures::barabasi_albert(400, 3, 5);
  for (std::size_t k : {2u, 3u, 4u}) CHECK(partition_hierarchical(g, opts(k)).map == partition_hierarchical(g, opts(k)).map);
}

TEST_CASE("every node is assigned in range") {
  for (std::size_t k : {2u, 5u, 8u}) {
    const auto g = fixtures::erdos_renyi(120, 0.05, k);
    const auto r = partition_hierarchical(g, opts(k));
    r.map.validate(120);
    std::size_t total = 0;
    for (auto c : r.stats.vertex_counts) total += c;
    CHECK(total == 120);
  }
}

TEST_CASE("partition files round-trip") {
  const auto dir = fixtures::temp_dir("part");
  const auto m = random_balanced_partition(30, 4, 3);
  write_partition(dir + "/p.txt", m);
  CHECK(load_partition(dir + "/p.txt", 4) == m);
  CHECK_THROWS(load_partition(dir + "/p.txt", 2));
  const auto json = stats_to_json(evaluate_partition(fixtures::ring(30), m), PartitionPhase::Greedy);
  CHECK(json.find("\"phase_used\": \"greedy\"") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("option validation") {
  PartitionOptions o;
  o.epsilon = 1.0;
  CHECK_THROWS(o.validate());
  o = {};
  o.epsilon_relaxed = 1.01;
  CHECK_THROWS(o.validate());
  o = {};
  o.k = 0;
  CHECK_THROWS(o.validate());
}
