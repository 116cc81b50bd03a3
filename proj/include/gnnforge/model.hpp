#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gnnforge/dense.hpp"
#include "gnnforge/graph.hpp"
#include "gnnforge/kernels.hpp"
#include "gnnforge/sparsity.hpp"

namespace gnnforge {

enum class Optimizer { Sgd, Adam, AdamW };

std::string to_string(Optimizer o);
std::optional<Optimizer> parse_optimizer(std::string_view name);

struct LayerParams {
  DenseMatrix w;
  DenseMatrix grad_w;
  DenseMatrix adam_m;
  DenseMatrix adam_v;
  std::size_t step_count = 0;

  LayerParams() = default;
  LayerParams(std::size_t in, std::size_t out) : w(in, out), grad_w(in, out), adam_m(in, out), adam_v(in, out) {}

  std::size_t in_features() const noexcept { return w.rows(); }
  std::size_t out_features() const noexcept { return w.cols(); }
};

struct TrainConfig {
  static constexpr std::size_t kDefaultHidden = 32;
  static constexpr float kAdamEpsilon = 1e-8f;

  /// Empty means [F_in, 32, 32, num_classes], resolved against the dataset.
  std::vector<std::size_t> layer_dims;
  Aggregator aggregator = Aggregator::GcnNorm;
  Optimizer optimizer = Optimizer::Adam;
  float lr = 0.01f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float weight_decay = 0.0f;
  std::size_t epochs = 200;
  std::uint64_t seed = 42;
  SparsityPolicy policy;
  std::optional<ExecutionMode> force_mode;
  TileConfig tiles;

  void validate() const;
  std::size_t num_layers() const noexcept { return layer_dims.empty() ? 3 : layer_dims.size() - 1; }
};

/// Fills in default layer dims for a dataset and checks they fit it.
TrainConfig resolve_config(TrainConfig cfg, std::size_t in_features, std::size_t num_classes);

/// W ~ U(-a, a), a = sqrt(6 / (F_in + F_out)); deterministic per seed.
std::vector<LayerParams> xavier_init(std::span<const std::size_t> dims, std::uint64_t seed);

/// Graph operands shared by every epoch: the (normalized, for GcnNorm)
/// adjacency and its reverse for the adjoints.
struct PreparedGraph {
  CsrGraph graph;
  ReverseAdjacency reverse;
  Aggregator aggregator = Aggregator::Sum;

  static PreparedGraph build(const CsrGraph& g, Aggregator aggregator);
  static PreparedGraph build_normalized(CsrGraph already_prepared, Aggregator aggregator);
};

struct ActivationTape {
  /// Post-ReLU output of every hidden layer (layer l's entry feeds layer l+1).
  std::vector<DenseMatrix> hidden;
  std::vector<std::optional<ArgmaxRecord>> argmax;

  std::size_t depth() const noexcept { return argmax.size(); }
  void clear() {
    hidden.clear();
    argmax.clear();
  }
};

struct ForwardResult {
  DenseMatrix logits;
  ActivationTape tape;
};

/// The per-layer input transform; layer 0 honours the execution mode.
DenseMatrix layer_transform(const FeatureStore& x, const DenseMatrix* h, const LayerParams& p, bool first_layer,
                            ExecutionMode mode, const TileConfig& tiles);

/// dW for one layer from its input and the gradient at its transform output.
DenseMatrix layer_weight_grad(const FeatureStore& x, const DenseMatrix* h, const DenseMatrix& grad_t, bool first_layer,
                              ExecutionMode mode, const TileConfig& tiles);

/// Per layer: T = H W (X_csr W in Sparse mode at layer 0), Z = AGG(T),
/// H' = ReLU(Z) on every layer but the last.
ForwardResult forward_pass(const PreparedGraph& g, const FeatureStore& x, const std::vector<LayerParams>& params,
                           ExecutionMode mode, const TrainConfig& cfg);

struct LossResult {
  double loss = 0.0;      // sum of per-row cross entropy / normalizer
  double loss_sum = 0.0;  // unnormalized
  std::size_t correct = 0;
  DenseMatrix grad_logits;
};

/// Softmax cross-entropy over the first `rows` rows of logits (all rows by
/// default); the gradient is (softmax - onehot) / normalizer.
LossResult loss_softmax_ce(const DenseMatrix& logits, std::span<const std::uint32_t> labels,
                           std::optional<double> normalizer = std::nullopt, std::optional<std::size_t> rows = {});

/// Overwrites grad_w of every layer.
void backward_pass(const PreparedGraph& g, const FeatureStore& x, const ForwardResult& fwd,
                   const DenseMatrix& grad_logits, std::vector<LayerParams>& params, ExecutionMode mode,
                   const TrainConfig& cfg);

void sgd_step(LayerParams& p, const TrainConfig& cfg);
void adam_step(LayerParams& p, const TrainConfig& cfg);
void optimizer_step(std::vector<LayerParams>& params, const TrainConfig& cfg);

/// FNV-1a over the raw bytes of every weight matrix.
std::uint64_t params_hash(const std::vector<LayerParams>& params);
std::size_t params_bytes(const std::vector<LayerParams>& params);

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double epoch_ms = 0.0;
  std::size_t peak_bytes = 0;
};

struct TrainResult {
  std::vector<EpochMetrics> trace;
  std::vector<LayerParams> params;
  TrainConfig config;  // resolved
  ExecutionMode mode = ExecutionMode::Dense;
  std::size_t peak_bytes = 0;          // above the live bytes at entry
  std::size_t largest_allocation = 0;  // single allocation, bytes
};

/// Mode selection once, then epochs x (forward, loss, backward, optimizer).
TrainResult train(DatasetBundle& bundle, const TrainConfig& cfg);

}  // namespace gnnforge
