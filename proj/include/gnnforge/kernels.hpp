#pragma once

#include <atomic>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>

#include "gnnforge/dense.hpp"
#include "gnnforge/graph.hpp"

namespace gnnforge {

struct TileConfig {
  std::size_t tile_width = 32;        // features per tile
  std::size_t prefetch_distance = 8;  // neighbor lookahead
  std::size_t chunk_size = 64;        // dynamic scheduling chunk (rows)
  bool prefetch = false;              // software prefetch hints; results are unaffected
  int num_threads = 0;                // 0: OpenMP default

  void validate() const;
};

/// Test harness for the conflict-freedom contract: records which worker wrote
/// each output element and counts elements written by more than one worker.
class WriteLog {
 public:
  explicit WriteLog(std::size_t elements);
  void record(std::size_t index, int worker) noexcept;
  std::size_t conflicts() const noexcept { return conflicts_.load(); }
  std::size_t unwritten() const noexcept;
  std::size_t distinct_workers() const;

 private:
  std::unique_ptr<std::atomic<int>[]> owner_;
  std::size_t size_;
  std::atomic<std::size_t> conflicts_{0};
};

/// Y[u,:] = sum over row u of val * X[col,:], features walked in tiles.
DenseMatrix spmm_tiled(const CsrRef& a, const DenseMatrix& x, const TileConfig& cfg = {}, WriteLog* log = nullptr);

/// dW = X^T G from the column view of X; each worker owns whole rows of dW.
DenseMatrix spmm_columnwise_backward(const CscView& x, const DenseMatrix& g, const TileConfig& cfg = {});

/// op(A) * op(B), blocked. Every output element is summed in ascending k, so
/// results are bitwise independent of the thread count.
DenseMatrix gemm(const DenseMatrix& a, const DenseMatrix& b, bool transpose_a = false, bool transpose_b = false,
                 const TileConfig& cfg = {});

enum class Aggregator { Sum, Mean, Max, GcnNorm };

std::string to_string(Aggregator a);
/// Case-insensitive; accepts sum, mean, max, gcn / gcnnorm.
std::optional<Aggregator> parse_aggregator(std::string_view name);

/// For Max aggregation: per output element, the slot within the node's
/// neighbor list that supplied the maximum (kNone for empty rows).
struct ArgmaxRecord {
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint32_t> slot;

  std::uint32_t at(std::size_t r, std::size_t c) const noexcept { return slot[r * cols + c]; }
};

struct AggregateResult {
  DenseMatrix out;
  std::optional<ArgmaxRecord> argmax;
};

/// Reversed adjacency used to turn scatter-style adjoints into conflict-free
/// gathers; keeps the originating CSR positions.
struct ReverseAdjacency {
  CscView csc;

  static ReverseAdjacency build(const CsrGraph& g) { return {csr_to_csc(g.view(), true)}; }
};

/// GcnNorm expects a graph from gcn_normalize (edge_val holds the
/// coefficients). Empty rows yield zero rows under every scheme.
AggregateResult aggregate(const CsrGraph& g, const DenseMatrix& h, Aggregator scheme, const TileConfig& cfg = {},
                          WriteLog* log = nullptr);

DenseMatrix aggregate_backward(const CsrGraph& g, const ReverseAdjacency& rev, const DenseMatrix& grad_out,
                               Aggregator scheme, const ArgmaxRecord* record, const TileConfig& cfg = {});
DenseMatrix aggregate_backward(const CsrGraph& g, const DenseMatrix& grad_out, Aggregator scheme,
                               const ArgmaxRecord* record, const TileConfig& cfg = {});

DenseMatrix relu(const DenseMatrix& x);
void relu_inplace(DenseMatrix& x);
/// g masked by x > 0. `x` may be either the pre- or post-activation.
DenseMatrix relu_backward(const DenseMatrix& x, const DenseMatrix& g);
void relu_backward_inplace(const DenseMatrix& x, DenseMatrix& g);
DenseMatrix softmax_rows(const DenseMatrix& x);

}  // namespace gnnforge
