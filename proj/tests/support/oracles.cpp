#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace oracle {

using gnnforge::Aggregator;

Mat to_mat(const DenseMatrix& m) {
  Mat out(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

DenseMatrix from_mat(const Mat& m) {
  const std::size_t cols = m.empty() ? 0 : m[0].size();
  DenseMatrix out(m.size(), cols);
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = static_cast<float>(m[r][c]);
  return out;
}

DenseMatrix naive_spmm(const CsrRef& a, const DenseMatrix& x) {
  Mat y(a.rows, std::vector<double>(x.cols(), 0.0));
  for (std::size_t r = 0; r < a.rows; ++r)
    for (auto e = a.row_ptr[r]; e < a.row_ptr[r + 1]; ++e) {
      const double w = a.val.empty() ? 1.0 : a.val[e];
      for (std::size_t c = 0; c < x.cols(); ++c) y[r][c] += w * x(a.col_idx[e], c);
    }
  DenseMatrix out = from_mat(y);
  if (y.empty()) out = DenseMatrix(0, x.cols());
  return out;
}

DenseMatrix naive_gemm(const DenseMatrix& a, const DenseMatrix& b, bool ta, bool tb) {
  const std::size_t m = ta ? a.cols() : a.rows();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t n = tb ? b.rows() : b.cols();
  DenseMatrix out(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += double(ta ? a(p, i) : a(i, p)) * double(tb ? b(j, p) : b(p, j));
      out(i, j) = static_cast<float>(s);
    }
  return out;
}

namespace {

double coefficient(const CsrGraph& g, Aggregator scheme, std::size_t u, std::size_t e) {
  switch (scheme) {
    case Aggregator::Sum: return 1.0;
    case Aggregator::Mean: return 1.0 / static_cast<double>(g.degree(u));
    case Aggregator::GcnNorm: return g.edge_val[e];
    case Aggregator::Max: break;
  }
  return 0.0;
}

// Per output element, the CSR position supplying the maximum (-1 for empty rows).
std::vector<std::int64_t> max_positions(const CsrGraph& g, const Mat& h) {
  const std::size_t f = h.empty() ? 0 : h[0].size();
  std::vector<std::int64_t> pos(g.num_nodes * f, -1);
  for (std::size_t u = 0; u < g.num_nodes; ++u)
    for (std::size_t c = 0; c < f; ++c) {
      double best = -std::numeric_limits<double>::infinity();
      for (auto e = g.row_ptr[u]; e < g.row_ptr[u + 1]; ++e) {
        const double v = h[g.col_idx[e]][c];
        if (pos[u * f + c] < 0 || v > best) {
          best = v;
          pos[u * f + c] = static_cast<std::int64_t>(e);
        }
      }
    }
  return pos;
}

Mat aggregate_mat(const CsrGraph& g, const Mat& h, Aggregator scheme, std::vector<std::int64_t>* argmax) {
  const std::size_t f = h.empty() ? 0 : h[0].size();
  Mat out(g.num_nodes, std::vector<double>(f, 0.0));
  if (scheme == Aggregator::Max) {
    const auto pos = max_positions(g, h);
    for (std::size_t u = 0; u < g.num_nodes; ++u)
      for (std::size_t c = 0; c < f; ++c) {
        const auto p = pos[u * f + c];
        if (p >= 0) out[u][c] = h[g.col_idx[p]][c];
      }
    if (argmax) *argmax = pos;
    return out;
  }
  for (std::size_t u = 0; u < g.num_nodes; ++u)
    for (auto e = g.row_ptr[u]; e < g.row_ptr[u + 1]; ++e) {
      const double w = coefficient(g, scheme, u, e);
      for (std::size_t c = 0; c < f; ++c) out[u][c] += w * h[g.col_idx[e]][c];
    }
  return out;
}

Mat matmul(const Mat& a, const Mat& b) {
  const std::size_t n = a.size(), k = b.size(), m = b.empty() ? 0 : b[0].size();
  Mat out(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < m; ++j) out[i][j] += a[i][p] * b[p][j];
  return out;
}

}  // namespace

DenseMatrix naive_aggregate(const CsrGraph& g, const DenseMatrix& h, Aggregator scheme) {
  DenseMatrix out = from_mat(aggregate_mat(g, to_mat(h), scheme, nullptr));
  if (g.num_nodes == 0) out = DenseMatrix(0, h.cols());
  return out;
}

DenseMatrix naive_aggregate_backward(const CsrGraph& g, const DenseMatrix& h, const DenseMatrix& grad,
                                     Aggregator scheme) {
  const std::size_t f = grad.cols();
  Mat out(g.num_nodes, std::vector<double>(f, 0.0));
  if (scheme == Aggregator::Max) {
    const auto pos = max_positions(g, to_mat(h));
    for (std::size_t u = 0; u < g.num_nodes; ++u)
      for (std::size_t c = 0; c < f; ++c) {
        const auto p = pos[u * f + c];
        if (p >= 0) out[g.col_idx[p]][c] += grad(u, c);
      }
  } else {
    for (std::size_t u = 0; u < g.num_nodes; ++u)
      for (auto e = g.row_ptr[u]; e < g.row_ptr[u + 1]; ++e) {
        const double w = coefficient(g, scheme, u, e);
        for (std::size_t c = 0; c < f; ++c) out[g.col_idx[e]][c] += w * grad(u, c);
      }
  }
  DenseMatrix r = from_mat(out);
  if (g.num_nodes == 0) r = DenseMatrix(0, f);
  return r;
}

Mat dense_adjacency(const CsrGraph& g, Aggregator scheme) {
  Mat a(g.num_nodes, std::vector<double>(g.num_nodes, 0.0));
  for (std::size_t u = 0; u < g.num_nodes; ++u)
    for (auto e = g.row_ptr[u]; e < g.row_ptr[u + 1]; ++e) a[u][g.col_idx[e]] += coefficient(g, scheme, u, e);
  return a;
}

double ReferenceModel::loss(const std::vector<Mat>& weights, Pattern* pattern, Mat* logits) const {
  Mat h = x;
  if (pattern) *pattern = {};
  const bool linear = scheme != Aggregator::Max;
  const Mat adj = linear ? dense_adjacency(*graph, scheme) : Mat{};
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const Mat t = matmul(h, weights[l]);
    Mat z;
    if (linear) {
      z = matmul(adj, t);
    } else {
      std::vector<std::int64_t> am;
      z = aggregate_mat(*graph, t, scheme, &am);
      if (pattern) pattern->argmax.push_back(std::move(am));
    }
    if (l + 1 < weights.size()) {
      std::vector<bool> mask;
      for (auto& row : z)
        for (double& v : row) {
          mask.push_back(v > 0.0);
          v = std::max(v, 0.0);
        }
      if (pattern) pattern->relu.push_back(std::move(mask));
    }
    h = std::move(z);
  }
  double total = 0.0;
  for (std::size_t r = 0; r < h.size(); ++r) {
    const double mx = *std::max_element(h[r].begin(), h[r].end());
    double s = 0.0;
    for (double v : h[r]) s += std::exp(v - mx);
    total += std::log(s) + mx - h[r][labels[r]];
  }
  if (logits) *logits = h;
  return total / static_cast<double>(h.size());
}

std::vector<Mat> to_mats(const std::vector<DenseMatrix>& ws) {
  std::vector<Mat> out;
  for (const auto& w : ws) out.push_back(to_mat(w));
  return out;
}

void adam_reference(std::vector<double>& w, const std::vector<double>& g, AdamState& s, double lr, double b1,
                    double b2, double eps) {
  if (s.m.empty()) {
    s.m.assign(w.size(), 0.0);
    s.v.assign(w.size(), 0.0);
  }
  ++s.t;
  for (std::size_t i = 0; i < w.size(); ++i) {
    s.m[i] = b1 * s.m[i] + (1 - b1) * g[i];
    s.v[i] = b2 * s.v[i] + (1 - b2) * g[i] * g[i];
    const double mh = s.m[i] / (1 - std::pow(b1, double(s.t)));
    const double vh = s.v[i] / (1 - std::pow(b2, double(s.t)));
    w[i] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

UnionFind::UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

std::size_t UnionFind::find(std::size_t x) {
  while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
  return x;
}

void UnionFind::unite(std::size_t a, std::size_t b) {
  a = find(a);
  b = find(b);
  if (a != b) parent_[std::max(a, b)] = std::min(a, b);
}

double max_rel_error(const DenseMatrix& got, const DenseMatrix& want, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double a = got.data()[i], b = want.data()[i];
    worst = std::max(worst, std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor}));
  }
  return worst;
}

DenseMatrix abs(const DenseMatrix& m) {
  DenseMatrix out = m;
  for (float& v : out.values()) v = std::abs(v);
  return out;
}

gnnforge::CsrMatrix abs(const gnnforge::CsrMatrix& m) {
  auto out = m;
  for (float& v : out.val) v = std::abs(v);
  return out;
}

double max_scaled_error(const DenseMatrix& got, const DenseMatrix& want, const DenseMatrix& scale) {
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double diff = std::abs(double(got.data()[i]) - double(want.data()[i]));
    const double s = scale.data()[i];
    if (s == 0.0) {
      if (diff != 0.0) return std::numeric_limits<double>::infinity();
      continue;
    }
    worst = std::max(worst, diff / s);
  }
  return worst;
}

}  // namespace oracle
