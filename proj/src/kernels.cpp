#include "gnnforge/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <unordered_set>

#include "gnnforge/errors.hpp"

namespace gnnforge {
namespace {

int worker_count(const TileConfig& cfg) { return cfg.num_threads > 0 ? cfg.num_threads : omp_get_max_threads(); }

inline void prefetch_row(const float* p) noexcept { __builtin_prefetch(p, 0, 3); }

// out[f0, f0+T) = sum_e coef(e) * x[idx[e], f0 + j]; T fixed at compile time
// so the accumulator lives in registers.
template <std::size_t T, typename Coef>
inline void tile_fixed(Offset begin, Offset end, const NodeId* idx, Coef&& coef, const float* x, std::size_t ld,
                       std::size_t f0, float* out, const TileConfig& cfg) {
  float acc[T] = {};
  const bool pf = cfg.prefetch && (end - begin) > cfg.prefetch_distance;
  for (Offset e = begin; e < end; ++e) {
    if (pf && e + cfg.prefetch_distance < end) prefetch_row(x + std::size_t(idx[e + cfg.prefetch_distance]) * ld + f0);
    const float c = coef(e);
    const float* xr = x + std::size_t(idx[e]) * ld + f0;
    for (std::size_t j = 0; j < T; ++j) acc[j] += c * xr[j];
  }
  for (std::size_t j = 0; j < T; ++j) out[f0 + j] = acc[j];
}

template <typename Coef>
inline void tile_dynamic(Offset begin, Offset end, const NodeId* idx, Coef&& coef, const float* x, std::size_t ld,
                         std::size_t f0, std::size_t width, float* out, const TileConfig& cfg) {
  float* acc = out + f0;  // pre-zeroed
  const bool pf = cfg.prefetch && (end - begin) > cfg.prefetch_distance;
  for (Offset e = begin; e < end; ++e) {
    if (pf && e + cfg.prefetch_distance < end) prefetch_row(x + std::size_t(idx[e + cfg.prefetch_distance]) * ld + f0);
    const float c = coef(e);
    const float* xr = x + std::size_t(idx[e]) * ld + f0;
    for (std::size_t j = 0; j < width; ++j) acc[j] += c * xr[j];
  }
}

template <typename Coef>
inline void accumulate_row(Offset begin, Offset end, const NodeId* idx, Coef&& coef, const DenseMatrix& x, float* out,
                           const TileConfig& cfg) {
  const std::size_t F = x.cols();
  for (std::size_t f0 = 0; f0 < F; f0 += cfg.tile_width) {
    const std::size_t width = std::min(cfg.tile_width, F - f0);
    if (width == 32)
      tile_fixed<32>(begin, end, idx, coef, x.data(), F, f0, out, cfg);
    else
      tile_dynamic(begin, end, idx, coef, x.data(), F, f0, width, out, cfg);
  }
}

void log_row(WriteLog* log, std::size_t row, std::size_t width) {
  if (log == nullptr) return;
  const int me = omp_get_thread_num();
  for (std::size_t f = 0; f < width; ++f) log->record(row * width + f, me);
}

// Parallel loop over rows with dynamic chunked scheduling.
template <typename Body>
void for_rows(std::size_t n, const TileConfig& cfg, Body&& body) {
  const auto count = static_cast<std::int64_t>(n);
  const auto chunk = static_cast<int>(std::max<std::size_t>(1, cfg.chunk_size));
#pragma omp parallel for schedule(dynamic, chunk) num_threads(worker_count(cfg))
  for (std::int64_t i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
}

}  // namespace

void TileConfig::validate() const {
  if (tile_width == 0) throw std::invalid_argument("TileConfig: tile_width must be > 0");
  if (chunk_size == 0) throw std::invalid_argument("TileConfig: chunk_size must be > 0");
}

WriteLog::WriteLog(std::size_t elements) : owner_(new std::atomic<int>[elements]), size_(elements) {
  for (std::size_t i = 0; i < size_; ++i) owner_[i].store(-1, std::memory_order_relaxed);
}

void WriteLog::record(std::size_t index, int worker) noexcept {
  int expected = -1;
  if (!owner_[index].compare_exchange_strong(expected, worker) && expected != worker) conflicts_.fetch_add(1);
}

std::size_t WriteLog::unwritten() const noexcept {
  std::size_t n = 0;
  for (std::size_t i = 0; i < size_; ++i) n += owner_[i].load() == -1;
  return n;
}

std::size_t WriteLog::distinct_workers() const {
  std::unordered_set<int> seen;
  for (std::size_t i = 0; i < size_; ++i)
    if (owner_[i].load() >= 0) seen.insert(owner_[i].load());
  return seen.size();
}

DenseMatrix spmm_tiled(const CsrRef& a, const DenseMatrix& x, const TileConfig& cfg, WriteLog* log) {
  cfg.validate();
  if (a.cols != x.rows())
    throw DimensionError("spmm_tiled: sparse operand has " + std::to_string(a.cols) + " columns but X has " +
                         std::to_string(x.rows()) + " rows");
  DenseMatrix y(a.rows, x.cols());
  const NodeId* idx = a.col_idx.data();
  for_rows(a.rows, cfg, [&](std::size_t u) {
    float* out = y.data() + u * y.cols();
    if (a.val.empty())
      accumulate_row(a.row_ptr[u], a.row_ptr[u + 1], idx, [](Offset) { return 1.0f; }, x, out, cfg);
    else
      accumulate_row(a.row_ptr[u], a.row_ptr[u + 1], idx, [&](Offset e) { return a.val[e]; }, x, out, cfg);
    log_row(log, u, y.cols());
  });
  return y;
}

DenseMatrix spmm_columnwise_backward(const CscView& x, const DenseMatrix& g, const TileConfig& cfg) {
  if (g.rows() != x.rows)
    throw DimensionError("spmm_columnwise_backward: G has " + std::to_string(g.rows()) + " rows, X has " +
                         std::to_string(x.rows));
  DenseMatrix dw(x.cols, g.cols());
  const std::size_t width = g.cols();
  for_rows(x.cols, cfg, [&](std::size_t f) {
    float* out = dw.data() + f * width;
    for (Offset e = x.col_ptr[f]; e < x.col_ptr[f + 1]; ++e) {
      const float v = x.val.empty() ? 1.0f : x.val[e];
      const float* gr = g.data() + std::size_t(x.row_idx[e]) * width;
      for (std::size_t j = 0; j < width; ++j) out[j] += v * gr[j];
    }
  });
  return dw;
}

namespace {

constexpr std::size_t kGemmRows = 4;
constexpr std::size_t kGemmCols = 8;
typedef float Vec4 __attribute__((vector_size(16)));

// C[0..rows, 0..8) = panel^T * B[:, 0..8), summed in ascending k.
void gemm_tile(const float* panel, const float* b, std::size_t ldb, std::size_t k, float* c, std::size_t ldc,
               std::size_t rows) {
  Vec4 acc[kGemmRows][2] = {};
  for (std::size_t kk = 0; kk < k; ++kk) {
    Vec4 b0, b1;
    std::memcpy(&b0, b + kk * ldb, sizeof b0);
    std::memcpy(&b1, b + kk * ldb + 4, sizeof b1);
    const float* a = panel + kk * kGemmRows;
    for (std::size_t r = 0; r < kGemmRows; ++r) {
      acc[r][0] += a[r] * b0;
      acc[r][1] += a[r] * b1;
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    std::memcpy(c + r * ldc, &acc[r][0], sizeof(Vec4));
    std::memcpy(c + r * ldc + 4, &acc[r][1], sizeof(Vec4));
  }
}

}  // namespace

DenseMatrix gemm(const DenseMatrix& a, const DenseMatrix& b_in, bool transpose_a, bool transpose_b,
                 const TileConfig& cfg) {
  const DenseMatrix b_t = transpose_b ? transpose(b_in) : DenseMatrix{};
  const DenseMatrix& b = transpose_b ? b_t : b_in;
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t k = transpose_a ? a.rows() : a.cols();
  if (k != b.rows())
    throw DimensionError("gemm: inner dimensions " + std::to_string(k) + " and " + std::to_string(b.rows()) +
                         " differ");
  const std::size_t n = b.cols();
  DenseMatrix c(m, n);
  const DenseMatrix a_t = transpose_a ? transpose(a) : DenseMatrix{};
  const DenseMatrix& ap = transpose_a ? a_t : a;
  const std::size_t row_blocks = (m + kGemmRows - 1) / kGemmRows;
  TileConfig blocks = cfg;
  blocks.chunk_size = std::max<std::size_t>(1, cfg.chunk_size / kGemmRows);
  for_rows(row_blocks, blocks, [&](std::size_t rb) {
    const std::size_t i0 = rb * kGemmRows, rows = std::min(kGemmRows, m - i0);
    std::vector<float> panel(k * kGemmRows, 0.0f);  // A rows interleaved by k
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t kk = 0; kk < k; ++kk) panel[kk * kGemmRows + r] = ap(i0 + r, kk);
    std::size_t j0 = 0;
    for (; j0 + kGemmCols <= n; j0 += kGemmCols) gemm_tile(panel.data(), b.data() + j0, n, k, c.data() + i0 * n + j0, n, rows);
    for (; j0 < n; ++j0)
      for (std::size_t r = 0; r < rows; ++r) {
        float acc = 0.0f;
        for (std::size_t kk = 0; kk < k; ++kk) acc += panel[kk * kGemmRows + r] * b(kk, j0);
        c(i0 + r, j0) = acc;
      }
  });
  return c;
}

std::string to_string(Aggregator a) {
  switch (a) {
    case Aggregator::Sum: return "sum";
    case Aggregator::Mean: return "mean";
    case Aggregator::Max: return "max";
    case Aggregator::GcnNorm: return "gcn";
  }
  return "?";
}

std::optional<Aggregator> parse_aggregator(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (s == "sum") return Aggregator::Sum;
  if (s == "mean") return Aggregator::Mean;
  if (s == "max") return Aggregator::Max;
  if (s == "gcn" || s == "gcnnorm" || s == "gcn-norm") return Aggregator::GcnNorm;
  return std::nullopt;
}

AggregateResult aggregate(const CsrGraph& g, const DenseMatrix& h, Aggregator scheme, const TileConfig& cfg,
                          WriteLog* log) {
  cfg.validate();
  if (h.rows() != g.num_nodes)
    throw DimensionError("aggregate: H has " + std::to_string(h.rows()) + " rows, graph has " +
                         std::to_string(g.num_nodes) + " nodes");
  const std::size_t F = h.cols();
  AggregateResult res{DenseMatrix(g.num_nodes, F), std::nullopt};
  const NodeId* idx = g.col_idx.data();
  switch (scheme) {
    case Aggregator::Sum:
      res.out = spmm_tiled(g.unweighted_view(), h, cfg, log);
      break;
    case Aggregator::GcnNorm:
      if (!g.weighted()) throw ContractViolation("aggregate(GcnNorm): graph lacks normalization coefficients");
      res.out = spmm_tiled(g.view(), h, cfg, log);
      break;
    case Aggregator::Mean:
      for_rows(g.num_nodes, cfg, [&](std::size_t u) {
        float* out = res.out.data() + u * F;
        const std::size_t deg = g.degree(u);
        if (deg != 0) {
          accumulate_row(g.row_ptr[u], g.row_ptr[u + 1], idx, [](Offset) { return 1.0f; }, h, out, cfg);
          const float d = float(deg);
          for (std::size_t f = 0; f < F; ++f) out[f] /= d;
        }
        log_row(log, u, F);
      });
      break;
    case Aggregator::Max: {
      ArgmaxRecord rec{g.num_nodes, F, std::vector<std::uint32_t>(g.num_nodes * F, ArgmaxRecord::kNone)};
      for_rows(g.num_nodes, cfg, [&](std::size_t u) {
        float* out = res.out.data() + u * F;
        std::uint32_t* slot = rec.slot.data() + u * F;
        const Offset begin = g.row_ptr[u], end = g.row_ptr[u + 1];
        if (begin == end) {
          log_row(log, u, F);
          return;
        }
        for (std::size_t f0 = 0; f0 < F; f0 += cfg.tile_width) {
          const std::size_t width = std::min(cfg.tile_width, F - f0);
          // The first neighbor seeds the tile; later ones replace only on a
          // strictly larger value, so ties keep the lowest slot.
          const float* first = h.data() + std::size_t(idx[begin]) * F + f0;
          for (std::size_t j = 0; j < width; ++j) {
            out[f0 + j] = first[j];
            slot[f0 + j] = 0;
          }
          for (Offset e = begin + 1; e < end; ++e) {
            const float* xr = h.data() + std::size_t(idx[e]) * F + f0;
            const auto s = std::uint32_t(e - begin);
            for (std::size_t j = 0; j < width; ++j) {
              if (xr[j] > out[f0 + j]) {
                out[f0 + j] = xr[j];
                slot[f0 + j] = s;
              }
            }
          }
        }
        log_row(log, u, F);
      });
      res.argmax = std::move(rec);
      break;
    }
  }
  return res;
}

DenseMatrix aggregate_backward(const CsrGraph& g, const ReverseAdjacency& rev, const DenseMatrix& grad_out,
                               Aggregator scheme, const ArgmaxRecord* record, const TileConfig& cfg) {
  cfg.validate();
  if (grad_out.rows() != g.num_nodes) throw DimensionError("aggregate_backward: grad rows != num_nodes");
  if (rev.csc.cols != g.num_nodes || rev.csc.nnz() != g.num_edges() || rev.csc.src_pos.size() != rev.csc.nnz())
    throw ContractViolation("aggregate_backward: reverse adjacency does not match graph");
  const std::size_t F = grad_out.cols();
  DenseMatrix dx(g.num_nodes, F);
  const CscView& t = rev.csc;
  const NodeId* src_rows = t.row_idx.data();

  auto gather = [&](auto&& coef) {
    for_rows(g.num_nodes, cfg, [&](std::size_t v) {
      accumulate_row(t.col_ptr[v], t.col_ptr[v + 1], src_rows, coef, grad_out, dx.data() + v * F, cfg);
    });
  };

  switch (scheme) {
    case Aggregator::Sum:
      gather([](Offset) { return 1.0f; });
      break;
    case Aggregator::Mean:
      gather([&](Offset k) { return 1.0f / float(g.degree(src_rows[k])); });
      break;
    case Aggregator::GcnNorm:
      if (!g.weighted()) throw ContractViolation("aggregate_backward(GcnNorm): graph lacks coefficients");
      gather([&](Offset k) { return g.edge_val[t.src_pos[k]]; });
      break;
    case Aggregator::Max: {
      if (record == nullptr) throw ContractViolation("aggregate_backward(Max): argmax record required");
      if (record->rows != g.num_nodes || record->cols != F)
        throw ContractViolation("aggregate_backward(Max): record shape does not match gradient");
      for_rows(g.num_nodes, cfg, [&](std::size_t v) {
        float* out = dx.data() + v * F;
        for (Offset k = t.col_ptr[v]; k < t.col_ptr[v + 1]; ++k) {
          const NodeId u = src_rows[k];
          const auto s = std::uint32_t(t.src_pos[k] - g.row_ptr[u]);
          const std::uint32_t* won = record->slot.data() + std::size_t(u) * F;
          const float* gu = grad_out.data() + std::size_t(u) * F;
          for (std::size_t f = 0; f < F; ++f)
            if (won[f] == s) out[f] += gu[f];
        }
      });
      break;
    }
  }
  return dx;
}

DenseMatrix aggregate_backward(const CsrGraph& g, const DenseMatrix& grad_out, Aggregator scheme,
                               const ArgmaxRecord* record, const TileConfig& cfg) {
  return aggregate_backward(g, ReverseAdjacency::build(g), grad_out, scheme, record, cfg);
}

void relu_inplace(DenseMatrix& x) {
  for (float& v : x.values()) v = v > 0.0f ? v : 0.0f;
}

DenseMatrix relu(const DenseMatrix& x) {
  DenseMatrix y = x;
  relu_inplace(y);
  return y;
}

void relu_backward_inplace(const DenseMatrix& x, DenseMatrix& g) {
  if (x.rows() != g.rows() || x.cols() != g.cols()) throw DimensionError("relu_backward: shape mismatch");
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(x.values()[i] > 0.0f)) g.values()[i] = 0.0f;
}

DenseMatrix relu_backward(const DenseMatrix& x, const DenseMatrix& g) {
  DenseMatrix out = g;
  relu_backward_inplace(x, out);
  return out;
}

DenseMatrix softmax_rows(const DenseMatrix& x) {
  DenseMatrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto in = x.row(r);
    auto out = y.row(r);
    if (in.empty()) continue;
    const float mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      out[c] = std::exp(in[c] - mx);
      sum += out[c];
    }
    const float inv = float(1.0 / sum);
    for (float& v : out) v *= inv;
  }
  return y;
}

}  // namespace gnnforge
