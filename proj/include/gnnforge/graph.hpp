#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gnnforge/dense.hpp"

namespace gnnforge {

using NodeId = std::uint32_t;
using Offset = std::uint64_t;

/// Non-owning view of a CSR matrix. An empty `val` means unit weights.
struct CsrRef {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::span<const Offset> row_ptr;
  std::span<const NodeId> col_idx;
  std::span<const float> val;

  std::size_t nnz() const noexcept { return col_idx.size(); }
  float weight(Offset e) const noexcept { return val.empty() ? 1.0f : val[e]; }
  std::size_t degree(std::size_t r) const noexcept { return row_ptr[r + 1] - row_ptr[r]; }
};

/// General (possibly rectangular) CSR matrix, used for sparse feature views.
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Offset> row_ptr{0};
  std::vector<NodeId> col_idx;
  std::vector<float> val;

  std::size_t nnz() const noexcept { return col_idx.size(); }
  CsrRef view() const noexcept { return {rows, cols, row_ptr, col_idx, val}; }
  void validate() const;
  bool operator==(const CsrMatrix&) const = default;
};

/// Column-compressed mirror of a CSR matrix. When built with positions,
/// `src_pos[k]` is the CSR entry index that entry k was copied from.
struct CscView {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Offset> col_ptr{0};
  std::vector<NodeId> row_idx;
  std::vector<float> val;
  std::vector<Offset> src_pos;

  std::size_t nnz() const noexcept { return row_idx.size(); }
  bool operator==(const CscView&) const = default;
};

struct Edge {
  NodeId src = 0;
  NodeId dst = 0;
  float weight = 1.0f;
};

/// Square adjacency in CSR form. Row u lists N(u), the nodes whose features
/// u aggregates; an edge "u v" places v in row u.
struct CsrGraph {
  std::size_t num_nodes = 0;
  std::vector<Offset> row_ptr{0};
  std::vector<NodeId> col_idx;
  std::vector<float> edge_val;  // empty when unweighted

  CsrGraph() = default;
  explicit CsrGraph(std::size_t n) : num_nodes(n), row_ptr(n + 1, 0) {}

  /// Edges are sorted by (src, dst); duplicates are kept.
  static CsrGraph from_edges(std::size_t num_nodes, std::vector<Edge> edges, bool weighted);

  std::size_t num_edges() const noexcept { return col_idx.size(); }
  bool weighted() const noexcept { return !edge_val.empty(); }
  std::size_t degree(std::size_t u) const noexcept { return row_ptr[u + 1] - row_ptr[u]; }
  std::span<const NodeId> neighbors(std::size_t u) const noexcept {
    return {col_idx.data() + row_ptr[u], degree(u)};
  }
  CsrRef view() const noexcept { return {num_nodes, num_nodes, row_ptr, col_idx, edge_val}; }
  /// Same structure with unit weights regardless of edge_val.
  CsrRef unweighted_view() const noexcept { return {num_nodes, num_nodes, row_ptr, col_idx, {}}; }
  std::vector<Edge> edges() const;
  void validate() const;
  bool operator==(const CsrGraph&) const = default;
};

CscView csr_to_csc(const CsrRef& m, bool keep_positions = false);
CsrMatrix csc_to_csr(const CscView& m);
DenseMatrix to_dense(const CsrRef& m);
DenseMatrix to_dense(const CscView& m);
CsrMatrix dense_to_csr(const DenseMatrix& m);
CscView dense_to_csc(const DenseMatrix& m);

/// Per-node row length; sums to num_edges.
std::vector<std::size_t> degree_array(const CsrGraph& g);

/// Adds one self-loop per node and sets edge_val = 1/sqrt(d_u d_v), where d
/// is the row length including the self-loop.
CsrGraph gcn_normalize(const CsrGraph& g);

/// Fraction of bitwise-zero entries. -0.0 is not bitwise zero and counts as a nonzero.
double compute_sparsity(const DenseMatrix& x);

struct FeatureStore {
  DenseMatrix dense;
  std::optional<CsrMatrix> sparse_csr;
  std::optional<CscView> sparse_csc;
  double sparsity = 0.0;

  FeatureStore() = default;
  explicit FeatureStore(DenseMatrix x);

  std::size_t num_rows() const noexcept { return dense.rows(); }
  std::size_t num_cols() const noexcept { return dense.cols(); }
  bool has_sparse_views() const noexcept { return sparse_csr.has_value() && sparse_csc.has_value(); }
};

double compute_sparsity(const FeatureStore& f);

struct DatasetBundle {
  CsrGraph graph;
  FeatureStore features;
  std::vector<std::uint32_t> labels;
  std::size_t num_classes = 0;

  void validate() const;
};

// Text/binary ingestion. Edge lists: one "src dst [weight]" per line, 0-based.
CsrGraph load_edge_list(const std::string& path, std::size_t num_nodes);
CsrGraph parse_edge_list(std::string_view text, std::size_t num_nodes);
void write_edge_list(const std::string& path, const CsrGraph& g);

// Binary features: "MFEAT", u32 N, u32 F (little-endian), then N*F f32 LE.
DenseMatrix load_features(const std::string& path);
void write_features(const std::string& path, const DenseMatrix& x);

std::vector<std::uint32_t> load_labels(const std::string& path);
void write_labels(const std::string& path, std::span<const std::uint32_t> labels);

/// Reads <dir>/edges.txt, <dir>/features.mfeat and <dir>/labels.txt.
DatasetBundle load_dataset(const std::string& dir);
void write_dataset(const std::string& dir, const DatasetBundle& bundle);

}  // namespace gnnforge
