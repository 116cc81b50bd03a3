#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gnnforge/graph.hpp"

namespace gnnforge {

enum class ExecutionMode { Dense, Sparse };

std::string to_string(ExecutionMode m);

/// Dispatch threshold derived from the sparse/dense efficiency ratio.
struct SparsityPolicy {
  static constexpr double kDefaultGamma = 0.20;

  double gamma = kDefaultGamma;
  double tau = 1.0 - kDefaultGamma;

  /// gamma is clamped to [0, 1]; tau = 1 - gamma.
  static SparsityPolicy from_gamma(double gamma);
};

/// Sparse iff s >= tau. A tau of 1.0 or more means the sparse kernel never
/// pays off and the result is always Dense.
ExecutionMode decide_mode(double sparsity, const SparsityPolicy& policy);

/// Decides once for the store and, on Sparse, materializes the CSR and CSC
/// views (no-op if they already exist).
ExecutionMode select_mode(FeatureStore& f, const SparsityPolicy& policy);

/// Builds both sparse views from the dense matrix in O(N*F + nnz).
FeatureStore sparsify(const FeatureStore& f);
/// Rebuilds the dense matrix from the CSR view and drops the sparse views.
FeatureStore densify(const FeatureStore& f);
void materialize_sparse_views(FeatureStore& f);

/// Number of dense->sparse conversions performed by this process.
std::size_t conversion_count() noexcept;

struct BenchShape {
  std::size_t rows = 0;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  double sparsity = 0.9;
};

enum class BenchKernel { DenseGemm, SparseSpmm };

/// Returns the wall time in seconds of one run of `kernel` at `shape`.
using BenchTimer = std::function<double(const BenchShape&, BenchKernel)>;

struct CalibrationResult {
  SparsityPolicy policy;
  bool stable = true;
  std::vector<double> ratios;  // per-shape throughput_sparse / throughput_dense
  std::string warning;
};

std::vector<BenchShape> default_bench_shapes();
BenchTimer wallclock_bench_timer();

/// Median-of-`repeats` timing per shape, gamma = median of the per-shape
/// ratios. Spread (max-min)/median above 0.5 on any measurement marks the run
/// unstable and falls back to the default gamma.
CalibrationResult calibrate_gamma(std::span<const BenchShape> shapes, const BenchTimer& timer,
                                  std::size_t repeats = 5);

void save_calibration(const std::string& path, const SparsityPolicy& policy);
/// nullopt when the file does not exist.
std::optional<SparsityPolicy> load_calibration(const std::string& path);

}  // namespace gnnforge
