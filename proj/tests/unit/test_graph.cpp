#include <cmath>
#include <algorithm>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "generators.hpp"
#include "gnnforge/errors.hpp"
#include "gnnforge/graph.hpp"

using namespace gnnforge;

TEST_CASE("from_edges sorts by source then destination and keeps duplicates") {
  auto g = CsrGraph::from_edges(4, {{2, 1}, {0, 3}, {2, 0}, {0, 3}, {1, 2}}, false);
  CHECK(g.row_ptr == std::vector<Offset>{0, 2, 3, 5, 5});
  CHECK(g.col_idx == std::vector<NodeId>{3, 3, 2, 0, 1});
  CHECK(g.num_edges() == 5);
  CHECK_FALSE(g.weighted());
  CHECK(degree_array(g) == std::vector<std::size_t>{2, 1, 2, 0});
  g.validate();
}

TEST_CASE("from_edges rejects out-of-range endpoints") {
  CHECK_THROWS_AS(CsrGraph::from_edges(3, {{0, 3}}, false), RangeError);
}

TEST_CASE("validate catches broken offsets") {
  auto g = CsrGraph::from_edges(3, {{0, 1}, {1, 2}}, false);
  g.row_ptr[1] = 2;
  g.row_ptr[2] = 1;
  CHECK_THROWS_AS(g.validate(), DimensionError);
}

TEST_CASE("weighted edges round-trip through edges()") {
  auto g = CsrGraph::from_edges(3, {{1, 0, 0.5f}, {0, 2, 2.0f}}, true);
  const auto e = g.edges();
  REQUIRE(e.size() == 2);
  CHECK(e[0].src == 0);
  CHECK(e[0].dst == 2);
  CHECK(e[0].weight == 2.0f);
  CHECK(e[1].weight == 0.5f);
}

TEST_CASE("CSR to CSC and back is the identity") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto g = fixtures::random_directed(37, 150, seed, seed % 2 == 0);
    const auto csc = csr_to_csc(g.view(), true);
    CHECK(csc.nnz() == g.num_edges());
    for (std::size_t k = 0; k < csc.nnz(); ++k) CHECK(g.col_idx[csc.src_pos[k]] < g.num_nodes);
    const auto back = csc_to_csr(csc);
    CHECK(back.row_ptr == g.row_ptr);
    CHECK(back.col_idx == g.col_idx);
    if (g.weighted()) CHECK(back.val == g.edge_val);
    CHECK(to_dense(csc) == to_dense(g.view()));
  }
}

TEST_CASE("CSC src_pos points back at the copied CSR entry") {
  const auto g = fixtures::random_directed(20, 80, 9, true);
  const auto csc = csr_to_csc(g.view(), true);
  for (std::size_t c = 0; c < csc.cols; ++c)
    for (auto k = csc.col_ptr[c]; k < csc.col_ptr[c + 1]; ++k) {
      const auto e = csc.src_pos[k];
      CHECK(g.col_idx[e] == c);
      CHECK(g.edge_val[e] == csc.val[k]);
      CHECK(e >= g.row_ptr[csc.row_idx[k]]);
      CHECK(e < g.row_ptr[csc.row_idx[k] + 1]);
    }
}

TEST_CASE("dense conversions agree") {
  const auto x = fixtures::random_features(13, 7, 0.6, 3);
  const auto csr = dense_to_csr(x);
  csr.validate();
  CHECK(to_dense(csr.view()) == x);
  CHECK(to_dense(dense_to_csc(x)) == x);
  CHECK(csr.nnz() == static_cast<std::size_t>(std::count_if(x.values().begin(), x.values().end(),
                                                            [](float v) { return v != 0.0f; })));
}

TEST_CASE("gcn_normalize adds self loops and symmetric coefficients") {
  // path 0-1-2
  const auto g = fixtures::symmetric(3, {{0, 1}, {1, 2}});
  const auto n = gcn_normalize(g);
  CHECK(n.num_edges() == g.num_edges() + 3);
  CHECK(degree_array(n) == std::vector<std::size_t>{2, 3, 2});
  for (std::size_t u = 0; u < 3; ++u)
    for (auto e = n.row_ptr[u]; e < n.row_ptr[u + 1]; ++e) {
      const double want = 1.0 / std::sqrt(double(n.degree(u)) * double(n.degree(n.col_idx[e])));
      CHECK(n.edge_val[e] == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("gcn_normalize gives an isolated node a unit self loop") {
  const auto n = gcn_normalize(CsrGraph(2));
  CHECK(n.num_edges() == 2);
  CHECK(n.edge_val == std::vector<float>{1.0f, 1.0f});
}

TEST_CASE("sparsity counts only bitwise +0.0 as zero") {
  DenseMatrix x{{0.0f, -0.0f}, {1.0f, 0.0f}};
  CHECK(compute_sparsity(x) == doctest::Approx(0.5));
  CHECK(compute_sparsity(DenseMatrix(3, 3)) == 1.0);
  CHECK_THROWS_AS(compute_sparsity(DenseMatrix(0, 4)), DegenerateInputError);
  FeatureStore f(x);
  CHECK(f.sparsity == doctest::Approx(0.5));
}

TEST_CASE("edge list parsing reports the failing line") {
  const auto g = parse_edge_list("# header\n0 1\n\n1 2 0.5\n", 3);
  CHECK(g.num_edges() == 2);
  CHECK(g.weighted());
  try {
    parse_edge_list("0 1\n1\n", 3);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_edge_list("0 x\n", 3), ParseError);
  CHECK_THROWS_AS(parse_edge_list("0 1 w\n", 3), ParseError);
  CHECK_THROWS_AS(parse_edge_list("0 5\n", 3), RangeError);
}

TEST_CASE("dataset files round-trip") {
  const auto dir = fixtures::temp_dir("graph-io");
  auto b = fixtures::random_dataset(fixtures::random_directed(15, 40, 2, true), 6, 3, 0.5, 2);
  write_dataset(dir, b);
  const auto back = load_dataset(dir);
  CHECK(back.graph == b.graph);
  CHECK(back.features.dense == b.features.dense);
  CHECK(back.labels == b.labels);
  CHECK(back.num_classes == 3);
  std::filesystem::remove_all(dir);
}

TEST_CASE("feature and io failures") {
  const auto dir = fixtures::temp_dir("graph-bad");
  CHECK_THROWS_AS(load_features(dir + "/missing.mfeat"), IoError);
  {
    std::ofstream(dir + "/bad.mfeat") << "NOPE";
  }
  CHECK_THROWS_AS(load_features(dir + "/bad.mfeat"), IoError);
  {
    std::ofstream(dir + "/labels.txt") << "0\nx\n";
  }
  CHECK_THROWS_AS(load_labels(dir + "/labels.txt"), ParseError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset validation") {
  auto b = fixtures::random_dataset(fixtures::ring(5), 3, 2, 0.0, 1);
  b.validate();
  b.labels[0] = 7;
  CHECK_THROWS_AS(b.validate(), RangeError);
  b.labels.pop_back();
  CHECK_THROWS_AS(b.validate(), DimensionError);
}
