#include "gnnforge/model.hpp"

#include <algorithm>
#include <chrono>
#include <cctype>
#include <cmath>
#include <random>

#include "gnnforge/errors.hpp"
#include "gnnforge/memtrack.hpp"

namespace gnnforge {

std::string to_string(Optimizer o) {
  switch (o) {
    case Optimizer::Sgd: return "sgd";
    case Optimizer::Adam: return "adam";
    case Optimizer::AdamW: return "adamw";
  }
  return "?";
}

std::optional<Optimizer> parse_optimizer(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "sgd") return Optimizer::Sgd;
  if (s == "adam") return Optimizer::Adam;
  if (s == "adamw") return Optimizer::AdamW;
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (!layer_dims.empty()) {
    if (layer_dims.size() < 2) throw DimensionError("layer_dims needs at least an input and an output size");
    for (std::size_t d : layer_dims)
      if (d == 0) throw DimensionError("layer_dims entries must be positive");
  }
  if (!(beta1 > 0.0f && beta1 < 1.0f)) throw std::invalid_argument("beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0f && beta2 < 1.0f)) throw std::invalid_argument("beta2 must lie in (0, 1)");
  if (!(lr > 0.0f) || !std::isfinite(lr)) throw std::invalid_argument("lr must be positive");
  if (weight_decay < 0.0f) throw std::invalid_argument("weight_decay must be non-negative");
  tiles.validate();
}

TrainConfig resolve_config(TrainConfig cfg, std::size_t in_features, std::size_t num_classes) {
  if (cfg.layer_dims.empty())
    cfg.layer_dims = {in_features, TrainConfig::kDefaultHidden, TrainConfig::kDefaultHidden, num_classes};
  cfg.validate();
  if (cfg.layer_dims.front() != in_features)
    throw DimensionError("layer_dims[0] = " + std::to_string(cfg.layer_dims.front()) + " but features have " +
                         std::to_string(in_features) + " columns");
  if (cfg.layer_dims.back() < num_classes)
    throw DimensionError("output width " + std::to_string(cfg.layer_dims.back()) + " is smaller than " +
                         std::to_string(num_classes) + " classes");
  return cfg;
}

std::vector<LayerParams> xavier_init(std::span<const std::size_t> dims, std::uint64_t seed) {
  if (dims.size() < 2) throw DimensionError("need at least two layer dims");
  std::mt19937_64 rng(seed);
  std::vector<LayerParams> params;
  params.reserve(dims.size() - 1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double a = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
    std::uniform_real_distribution<float> dist(static_cast<float>(-a), static_cast<float>(a));
    LayerParams p(dims[l], dims[l + 1]);
    for (float& v : p.w.values()) v = dist(rng);
    params.push_back(std::move(p));
  }
  return params;
}

PreparedGraph PreparedGraph::build(const CsrGraph& g, Aggregator aggregator) {
  return build_normalized(aggregator == Aggregator::GcnNorm ? gcn_normalize(g) : g, aggregator);
}

PreparedGraph PreparedGraph::build_normalized(CsrGraph already_prepared, Aggregator aggregator) {
  PreparedGraph p;
  p.graph = std::move(already_prepared);
  p.reverse = ReverseAdjacency::build(p.graph);
  p.aggregator = aggregator;
  return p;
}

namespace {

void check_input(std::size_t cols, const LayerParams& p) {
  if (cols != p.in_features())
    throw DimensionError("layer input has " + std::to_string(cols) + " columns, weight expects " +
                         std::to_string(p.in_features()));
}

const CsrMatrix& sparse_rows(const FeatureStore& x) {
  if (!x.sparse_csr) throw ContractViolation("Sparse mode without a materialized CSR view");
  return *x.sparse_csr;
}

}  // namespace

DenseMatrix layer_transform(const FeatureStore& x, const DenseMatrix* h, const LayerParams& p, bool first_layer,
                            ExecutionMode mode, const TileConfig& tiles) {
  if (first_layer) {
    check_input(x.num_cols(), p);
    if (mode == ExecutionMode::Sparse) return spmm_tiled(sparse_rows(x).view(), p.w, tiles);
    return gemm(x.dense, p.w, false, false, tiles);
  }
  if (h == nullptr) throw ContractViolation("hidden layer without an input");
  check_input(h->cols(), p);
  return gemm(*h, p.w, false, false, tiles);
}

DenseMatrix layer_weight_grad(const FeatureStore& x, const DenseMatrix* h, const DenseMatrix& grad_t, bool first_layer,
                              ExecutionMode mode, const TileConfig& tiles) {
  if (first_layer) {
    if (mode == ExecutionMode::Sparse) {
      if (!x.sparse_csc) throw ContractViolation("Sparse mode without a materialized CSC view");
      return spmm_columnwise_backward(*x.sparse_csc, grad_t, tiles);
    }
    return gemm(x.dense, grad_t, true, false, tiles);
  }
  if (h == nullptr) throw ContractViolation("hidden layer without an input");
  return gemm(*h, grad_t, true, false, tiles);
}

ForwardResult forward_pass(const PreparedGraph& g, const FeatureStore& x, const std::vector<LayerParams>& params,
                           ExecutionMode mode, const TrainConfig& cfg) {
  if (params.empty()) throw DimensionError("model has no layers");
  if (x.num_rows() != g.graph.num_nodes)
    throw DimensionError("feature rows do not match the number of nodes");
  ForwardResult out;
  const std::size_t depth = params.size();
  out.tape.hidden.reserve(depth - 1);
  out.tape.argmax.reserve(depth);
  const DenseMatrix* input = nullptr;
  for (std::size_t l = 0; l < depth; ++l) {
    DenseMatrix t = layer_transform(x, input, params[l], l == 0, mode, cfg.tiles);
    AggregateResult z = aggregate(g.graph, t, g.aggregator, cfg.tiles);
    out.tape.argmax.push_back(std::move(z.argmax));
    if (l + 1 < depth) {
      relu_inplace(z.out);
      out.tape.hidden.push_back(std::move(z.out));
      input = &out.tape.hidden.back();
    } else {
      out.logits = std::move(z.out);
    }
  }
  return out;
}

LossResult loss_softmax_ce(const DenseMatrix& logits, std::span<const std::uint32_t> labels,
                           std::optional<double> normalizer, std::optional<std::size_t> rows) {
  const std::size_t n = rows.value_or(logits.rows());
  const std::size_t c = logits.cols();
  if (n > logits.rows() || labels.size() < n) throw DimensionError("labels do not cover the logits rows");
  const double norm = normalizer.value_or(static_cast<double>(n));
  LossResult res;
  res.grad_logits = DenseMatrix(logits.rows(), c);
  if (n == 0 || c == 0) return res;
  if (!(norm > 0.0)) throw DegenerateInputError("loss normalizer must be positive");

  for (std::size_t r = 0; r < n; ++r) {
    const std::uint32_t y = labels[r];
    if (y >= c) throw RangeError("label " + std::to_string(y) + " out of range for " + std::to_string(c) + " classes");
    const auto z = logits.row(r);
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (z[j] > z[best]) best = j;
    const double zmax = z[best];
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(static_cast<double>(z[j]) - zmax);
    res.loss_sum += std::log(denom) - (static_cast<double>(z[y]) - zmax);
    if (best == y) ++res.correct;
    auto g = res.grad_logits.row(r);
    for (std::size_t j = 0; j < c; ++j) {
      double p = std::exp(static_cast<double>(z[j]) - zmax) / denom;
      if (j == y) p -= 1.0;
      g[j] = static_cast<float>(p / norm);
    }
  }
  res.loss = res.loss_sum / norm;
  return res;
}

void backward_pass(const PreparedGraph& g, const FeatureStore& x, const ForwardResult& fwd,
                   const DenseMatrix& grad_logits, std::vector<LayerParams>& params, ExecutionMode mode,
                   const TrainConfig& cfg) {
  const std::size_t depth = params.size();
  if (fwd.tape.depth() != depth || fwd.tape.hidden.size() + 1 != depth)
    throw ContractViolation("activation tape does not match the parameter list");
  if (grad_logits.rows() != fwd.logits.rows() || grad_logits.cols() != fwd.logits.cols())
    throw DimensionError("grad_logits shape does not match the logits");

  DenseMatrix grad = grad_logits;
  for (std::size_t l = depth; l-- > 0;) {
    if (l + 1 < depth) relu_backward_inplace(fwd.tape.hidden[l], grad);
    const auto& record = fwd.tape.argmax[l];
    DenseMatrix grad_t =
        aggregate_backward(g.graph, g.reverse, grad, g.aggregator, record ? &*record : nullptr, cfg.tiles);
    const DenseMatrix* input = l == 0 ? nullptr : &fwd.tape.hidden[l - 1];
    params[l].grad_w = layer_weight_grad(x, input, grad_t, l == 0, mode, cfg.tiles);
    if (l > 0) grad = gemm(grad_t, params[l].w, false, true, cfg.tiles);
  }
}

void sgd_step(LayerParams& p, const TrainConfig& cfg) {
  auto w = p.w.values();
  const auto g = p.grad_w.values();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.lr * (g[i] + cfg.weight_decay * w[i]);
  ++p.step_count;
}

void adam_step(LayerParams& p, const TrainConfig& cfg) {
  const std::size_t t = ++p.step_count;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(t));
  const bool decoupled = cfg.optimizer == Optimizer::AdamW;
  auto w = p.w.values();
  auto m = p.adam_m.values();
  auto v = p.adam_v.values();
  const auto grad = p.grad_w.values();
  for (std::size_t i = 0; i < w.size(); ++i) {
    float g = grad[i];
    if (decoupled)
      w[i] -= cfg.lr * cfg.weight_decay * w[i];
    else
      g += cfg.weight_decay * w[i];
    m[i] = cfg.beta1 * m[i] + (1.0f - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0f - cfg.beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    w[i] -= static_cast<float>(cfg.lr * m_hat / (std::sqrt(v_hat) + TrainConfig::kAdamEpsilon));
  }
}

void optimizer_step(std::vector<LayerParams>& params, const TrainConfig& cfg) {
  for (LayerParams& p : params) {
    if (cfg.optimizer == Optimizer::Sgd)
      sgd_step(p, cfg);
    else
      adam_step(p, cfg);
  }
}

std::uint64_t params_hash(const std::vector<LayerParams>& params) {
  std::uint64_t h = 14695981039346656037ull;
  for (const LayerParams& p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.w.data());
    for (std::size_t i = 0; i < p.w.size() * sizeof(float); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::size_t params_bytes(const std::vector<LayerParams>& params) {
  std::size_t n = 0;
  for (const LayerParams& p : params) n += p.w.size() * sizeof(float);
  return n;
}

TrainResult train(DatasetBundle& bundle, const TrainConfig& cfg) {
  TrainResult res;
  res.config = resolve_config(cfg, bundle.features.num_cols(), bundle.num_classes);
  const TrainConfig& rc = res.config;
  if (bundle.labels.size() != bundle.features.num_rows()) throw DimensionError("one label per node required");

  memtrack::Scope scope;
  std::size_t peak = 0;
  std::size_t largest = 0;
  auto fold_counters = [&] {
    const std::size_t p = memtrack::peak_bytes();
    peak = std::max(peak, p > scope.baseline() ? p - scope.baseline() : 0);
    largest = std::max(largest, memtrack::largest_allocation());
  };

  if (rc.force_mode) {
    res.mode = *rc.force_mode;
    if (res.mode == ExecutionMode::Sparse) materialize_sparse_views(bundle.features);
  } else {
    res.mode = select_mode(bundle.features, rc.policy);
  }
  const PreparedGraph g = PreparedGraph::build(bundle.graph, rc.aggregator);
  res.params = xavier_init(rc.layer_dims, rc.seed);
  const double n = static_cast<double>(bundle.features.num_rows());

  res.trace.reserve(rc.epochs);
  for (std::size_t epoch = 0; epoch < rc.epochs; ++epoch) {
    fold_counters();
    memtrack::reset_peak();
    const auto t0 = std::chrono::steady_clock::now();
    {
      ForwardResult fwd = forward_pass(g, bundle.features, res.params, res.mode, rc);
      LossResult loss = loss_softmax_ce(fwd.logits, bundle.labels);
      backward_pass(g, bundle.features, fwd, loss.grad_logits, res.params, res.mode, rc);
      optimizer_step(res.params, rc);
      EpochMetrics m;
      m.epoch = epoch;
      m.loss = loss.loss;
      m.accuracy = n > 0 ? static_cast<double>(loss.correct) / n : 0.0;
      res.trace.push_back(m);
    }
    const auto t1 = std::chrono::steady_clock::now();
    EpochMetrics& m = res.trace.back();
    m.epoch_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    const std::size_t p = memtrack::peak_bytes();
    m.peak_bytes = p > scope.baseline() ? p - scope.baseline() : 0;
  }
  fold_counters();
  res.peak_bytes = peak;
  res.largest_allocation = largest;
  return res;
}

}  // namespace gnnforge
