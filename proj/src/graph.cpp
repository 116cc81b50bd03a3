#include "gnnforge/graph.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "gnnforge/errors.hpp"

namespace gnnforge {
namespace {

// Only +0.0 counts as zero, so -0.0 survives a sparse round trip bit-exactly.
bool is_zero(float v) noexcept { return std::bit_cast<std::uint32_t>(v) == 0; }

void validate_offsets(std::span<const Offset> ptr, std::size_t outer, std::size_t nnz, const char* what) {
  if (ptr.size() != outer + 1) throw DimensionError(std::string(what) + ": offset array length != outer+1");
  if (ptr.front() != 0) throw DimensionError(std::string(what) + ": offsets must start at 0");
  if (ptr.back() != nnz) throw DimensionError(std::string(what) + ": last offset != nnz");
  for (std::size_t i = 0; i < outer; ++i)
    if (ptr[i] > ptr[i + 1]) throw DimensionError(std::string(what) + ": offsets decrease");
}

}  // namespace

void CsrMatrix::validate() const {
  validate_offsets(row_ptr, rows, col_idx.size(), "CsrMatrix");
  for (NodeId c : col_idx)
    if (c >= cols) throw RangeError("CsrMatrix: column index out of range");
  if (!val.empty() && val.size() != col_idx.size()) throw DimensionError("CsrMatrix: val length != nnz");
}

CsrGraph CsrGraph::from_edges(std::size_t num_nodes, std::vector<Edge> edges, bool weighted) {
  for (const Edge& e : edges)
    if (e.src >= num_nodes || e.dst >= num_nodes)
      throw RangeError("edge (" + std::to_string(e.src) + ", " + std::to_string(e.dst) + ") references node >= " +
                       std::to_string(num_nodes));
  std::stable_sort(edges.begin(), edges.end(),
                   [](const Edge& a, const Edge& b) { return a.src != b.src ? a.src < b.src : a.dst < b.dst; });
  CsrGraph g(num_nodes);
  g.col_idx.reserve(edges.size());
  if (weighted) g.edge_val.reserve(edges.size());
  for (const Edge& e : edges) {
    ++g.row_ptr[e.src + 1];
    g.col_idx.push_back(e.dst);
    if (weighted) g.edge_val.push_back(e.weight);
  }
  for (std::size_t u = 0; u < num_nodes; ++u) g.row_ptr[u + 1] += g.row_ptr[u];
  return g;
}

std::vector<Edge> CsrGraph::edges() const {
  std::vector<Edge> out;
  out.reserve(num_edges());
  for (std::size_t u = 0; u < num_nodes; ++u)
    for (Offset e = row_ptr[u]; e < row_ptr[u + 1]; ++e)
      out.push_back({NodeId(u), col_idx[e], edge_val.empty() ? 1.0f : edge_val[e]});
  return out;
}

void CsrGraph::validate() const {
  validate_offsets(row_ptr, num_nodes, col_idx.size(), "CsrGraph");
  for (NodeId c : col_idx)
    if (c >= num_nodes) throw RangeError("CsrGraph: col_idx entry >= num_nodes");
  if (!edge_val.empty() && edge_val.size() != col_idx.size())
    throw DimensionError("CsrGraph: edge_val length != num_edges");
}

CscView csr_to_csc(const CsrRef& m, bool keep_positions) {
  CscView t;
  t.rows = m.rows;
  t.cols = m.cols;
  t.col_ptr.assign(m.cols + 1, 0);
  for (NodeId c : m.col_idx) ++t.col_ptr[c + 1];
  for (std::size_t c = 0; c < m.cols; ++c) t.col_ptr[c + 1] += t.col_ptr[c];

  t.row_idx.resize(m.nnz());
  if (!m.val.empty()) t.val.resize(m.nnz());
  if (keep_positions) t.src_pos.resize(m.nnz());
  std::vector<Offset> cursor(t.col_ptr.begin(), t.col_ptr.end() - 1);
  // Walking rows in order leaves each column's row_idx ascending.
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (Offset e = m.row_ptr[r]; e < m.row_ptr[r + 1]; ++e) {
      const Offset slot = cursor[m.col_idx[e]]++;
      t.row_idx[slot] = NodeId(r);
      if (!m.val.empty()) t.val[slot] = m.val[e];
      if (keep_positions) t.src_pos[slot] = e;
    }
  }
  return t;
}

CsrMatrix csc_to_csr(const CscView& m) {
  // The transpose of a CSC is a CSR of the transposed matrix; run the same
  // bucket pass with roles exchanged.
  const CsrRef as_csr{m.cols, m.rows, m.col_ptr, m.row_idx, m.val};
  CscView back = csr_to_csc(as_csr);
  CsrMatrix out;
  out.rows = m.rows;
  out.cols = m.cols;
  out.row_ptr = std::move(back.col_ptr);
  out.col_idx = std::move(back.row_idx);
  out.val = std::move(back.val);
  return out;
}

DenseMatrix to_dense(const CsrRef& m) {
  DenseMatrix d(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (Offset e = m.row_ptr[r]; e < m.row_ptr[r + 1]; ++e) d(r, m.col_idx[e]) += m.weight(e);
  return d;
}

DenseMatrix to_dense(const CscView& m) {
  DenseMatrix d(m.rows, m.cols);
  for (std::size_t c = 0; c < m.cols; ++c)
    for (Offset e = m.col_ptr[c]; e < m.col_ptr[c + 1]; ++e)
      d(m.row_idx[e], c) += m.val.empty() ? 1.0f : m.val[e];
  return d;
}

CsrMatrix dense_to_csr(const DenseMatrix& x) {
  CsrMatrix m;
  m.rows = x.rows();
  m.cols = x.cols();
  m.row_ptr.assign(x.rows() + 1, 0);
  std::size_t nnz = 0;
  for (float v : x.values()) nnz += !is_zero(v);
  m.col_idx.reserve(nnz);
  m.val.reserve(nnz);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (!is_zero(row[c])) {
        m.col_idx.push_back(NodeId(c));
        m.val.push_back(row[c]);
      }
    }
    m.row_ptr[r + 1] = m.col_idx.size();
  }
  return m;
}

CscView dense_to_csc(const DenseMatrix& x) {
  const CsrMatrix csr = dense_to_csr(x);
  return csr_to_csc(csr.view());
}

std::vector<std::size_t> degree_array(const CsrGraph& g) {
  std::vector<std::size_t> deg(g.num_nodes);
  for (std::size_t u = 0; u < g.num_nodes; ++u) deg[u] = g.degree(u);
  return deg;
}

CsrGraph gcn_normalize(const CsrGraph& g) {
  CsrGraph out(g.num_nodes);
  out.col_idx.reserve(g.num_edges() + g.num_nodes);
  for (std::size_t u = 0; u < g.num_nodes; ++u) {
    const auto nbrs = g.neighbors(u);
    // Insert the self-loop at its sorted position so rows stay ordered.
    const auto split = std::upper_bound(nbrs.begin(), nbrs.end(), NodeId(u));
    out.col_idx.insert(out.col_idx.end(), nbrs.begin(), split);
    out.col_idx.push_back(NodeId(u));
    out.col_idx.insert(out.col_idx.end(), split, nbrs.end());
    out.row_ptr[u + 1] = out.col_idx.size();
  }
  std::vector<float> inv_sqrt(g.num_nodes);
  for (std::size_t u = 0; u < g.num_nodes; ++u)
    inv_sqrt[u] = float(1.0 / std::sqrt(double(out.degree(u))));
  out.edge_val.resize(out.col_idx.size());
  for (std::size_t u = 0; u < g.num_nodes; ++u)
    for (Offset e = out.row_ptr[u]; e < out.row_ptr[u + 1]; ++e)
      out.edge_val[e] = inv_sqrt[u] * inv_sqrt[out.col_idx[e]];
  return out;
}

double compute_sparsity(const DenseMatrix& x) {
  if (x.size() == 0) throw DegenerateInputError("compute_sparsity: matrix has N*F = 0");
  std::size_t zeros = 0;
  for (float v : x.values()) zeros += is_zero(v);
  return double(zeros) / double(x.size());
}

FeatureStore::FeatureStore(DenseMatrix x) : dense(std::move(x)) {
  if (dense.size() != 0) sparsity = compute_sparsity(dense);
}

double compute_sparsity(const FeatureStore& f) { return compute_sparsity(f.dense); }

void DatasetBundle::validate() const {
  graph.validate();
  if (features.num_rows() != graph.num_nodes)
    throw DimensionError("dataset: feature rows (" + std::to_string(features.num_rows()) + ") != num_nodes (" +
                         std::to_string(graph.num_nodes) + ")");
  if (labels.size() != graph.num_nodes) throw DimensionError("dataset: label count != num_nodes");
  for (auto l : labels)
    if (l >= num_classes) throw RangeError("dataset: label " + std::to_string(l) + " >= num_classes");
}

}  // namespace gnnforge
