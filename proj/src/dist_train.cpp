#include <barrier>
#include <chrono>
#include <thread>

#include "gnnforge/dist.hpp"
#include "gnnforge/memtrack.hpp"

namespace gnnforge {

namespace {

struct RunState {
  const TrainConfig& cfg;
  const DistOptions& opts;
  ExecutionMode mode;
  Aggregator aggregator;
  double num_nodes;
  MessageFabric& fabric;
  LocalViews& views;
  std::barrier<>& sync;
  std::vector<std::vector<std::uint64_t>> hashes;  // [epoch][rank]
  std::vector<std::vector<double>> rank_ms;        // [epoch][rank]
  std::vector<std::size_t> exchanges;              // [epoch]
  std::vector<EpochMetrics> metrics;               // [epoch]
  std::vector<std::vector<BackwardEventRecord>> events;
  std::vector<std::vector<LayerParams>> params;
  const memtrack::Scope& scope;
};

void run_rank(RunState& st, std::size_t p) {
  RankContext& ctx = st.views.contexts[p];
  const HaloPlan& plan = st.views.plans[p];
  const TrainConfig& cfg = st.cfg;
  MessageFabric& fabric = st.fabric;
  auto& params = st.params[p];
  params = xavier_init(cfg.layer_dims, cfg.seed);
  const std::size_t depth = params.size();
  auto log = [&](std::size_t epoch, std::size_t layer, BackwardEvent e) {
    if (st.opts.record_events) st.events[p].push_back({epoch, layer, e});
  };

  // Fill the ghost feature rows once so sparse views see the owners' values.
  exchange_ghost(ctx, plan, fabric, ctx.features.dense);
  if (st.mode == ExecutionMode::Sparse) materialize_sparse_views(ctx.features);
  st.sync.arrive_and_wait();
  if (p == 0) fabric.reset_counters();
  st.sync.arrive_and_wait();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t exchanges = 0;

    std::vector<DenseMatrix> hidden;
    hidden.reserve(depth - 1);
    std::vector<std::optional<ArgmaxRecord>> argmax;
    DenseMatrix logits;
    const DenseMatrix* input = nullptr;
    for (std::size_t l = 0; l < depth; ++l) {
      DenseMatrix& refreshed = l == 0 ? ctx.features.dense : hidden.back();
      HaloExchange halo(ctx, plan, fabric);
      halo.begin(refreshed);
      halo.finish(refreshed);
      ++exchanges;
      DenseMatrix t = layer_transform(ctx.features, input, params[l], l == 0, st.mode, cfg.tiles);
      AggregateResult z = aggregate(ctx.local_graph, t, st.aggregator, cfg.tiles);
      argmax.push_back(std::move(z.argmax));
      if (l + 1 < depth) {
        relu_inplace(z.out);
        hidden.push_back(std::move(z.out));
        input = &hidden.back();
      } else {
        logits = std::move(z.out);
      }
    }

    LossResult loss = loss_softmax_ce(logits, ctx.labels, st.num_nodes, ctx.num_local);
    std::vector<double> totals = {loss.loss, static_cast<double>(loss.correct)};
    ring_allreduce(fabric, p, std::span<double>(totals));

    DenseMatrix grad = std::move(loss.grad_logits);
    for (std::size_t l = depth; l-- > 0;) {
      if (l + 1 < depth) relu_backward_inplace(hidden[l], grad);
      const auto& record = argmax[l];
      DenseMatrix grad_t = aggregate_backward(ctx.local_graph, ctx.reverse, grad, st.aggregator,
                                              record ? &*record : nullptr, cfg.tiles);
      reduce_ghost_gradients(ctx, plan, fabric, grad_t);
      const DenseMatrix* layer_input = l == 0 ? nullptr : &hidden[l - 1];
      DenseMatrix grad_w = layer_weight_grad(ctx.features, layer_input, grad_t, l == 0, st.mode, cfg.tiles);
      if (st.opts.pipelined) {
        AllreduceHandle h = ring_iallreduce(fabric, p, grad_w.values());
        log(epoch, l, BackwardEvent::AllreduceIssue);
        log(epoch, l, BackwardEvent::DxBegin);
        if (l > 0) grad = gemm(grad_t, params[l].w, false, true, cfg.tiles);
        log(epoch, l, BackwardEvent::DxEnd);
        h.wait();
        log(epoch, l, BackwardEvent::AllreduceWait);
      } else {
        ring_allreduce(fabric, p, grad_w.values());
        if (l > 0) grad = gemm(grad_t, params[l].w, false, true, cfg.tiles);
      }
      params[l].grad_w = std::move(grad_w);
    }
    optimizer_step(params, cfg);
    if (st.opts.inject_divergence_at == epoch && p == 1)
      params.front().w.values()[0] += 1.0f;

    st.hashes[epoch][p] = params_hash(params);
    st.rank_ms[epoch][p] =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (p == 0) {
      EpochMetrics& m = st.metrics[epoch];
      m.epoch = epoch;
      m.loss = totals[0];
      m.accuracy = st.num_nodes > 0 ? totals[1] / st.num_nodes : 0.0;
      st.exchanges[epoch] = exchanges;
    }
    st.sync.arrive_and_wait();
    for (std::uint64_t h : st.hashes[epoch])
      if (h != st.hashes[epoch].front()) throw ReplicaDivergence(epoch);
    if (p == 0) {
      EpochMetrics& m = st.metrics[epoch];
      m.epoch_ms = *std::max_element(st.rank_ms[epoch].begin(), st.rank_ms[epoch].end());
      m.peak_bytes = st.scope.peak_above_baseline();
    }
  }
}

}  // namespace

DistTrainResult train_distributed(DatasetBundle& bundle, const TrainConfig& cfg, const DistOptions& opts,
                                  std::optional<PartitionMap> map) {
  if (opts.ranks == 0) throw std::invalid_argument("ranks must be at least 1");
  DistTrainResult res;
  res.config = resolve_config(cfg, bundle.features.num_cols(), bundle.num_classes);
  const TrainConfig& rc = res.config;
  if (bundle.labels.size() != bundle.features.num_rows()) throw DimensionError("one label per node required");
  const memtrack::Scope scope;

  if (rc.force_mode) {
    res.mode = *rc.force_mode;
  } else {
    res.mode = decide_mode(bundle.features.sparsity, rc.policy);
  }

  PartitionOptions popts = opts.partition;
  popts.k = opts.ranks;
  if (map) {
    if (map->k != opts.ranks) throw DimensionError("partition map k differs from the rank count");
    map->validate(bundle.graph.num_nodes);
    res.partition.map = *map;
    res.partition.stats = evaluate_partition(bundle.graph, *map);
    res.partition.phase = PartitionPhase::Trivial;
  } else {
    res.partition = partition_hierarchical(bundle.graph, popts);
  }

  const CsrGraph prepared = rc.aggregator == Aggregator::GcnNorm ? gcn_normalize(bundle.graph) : bundle.graph;
  LocalViews views = build_local_views(prepared, bundle.features.dense, bundle.labels, res.partition.map);
  MessageFabric fabric(opts.ranks);
  std::barrier<> sync(static_cast<std::ptrdiff_t>(opts.ranks));

  RunState st{rc,
              opts,
              res.mode,
              rc.aggregator,
              static_cast<double>(bundle.features.num_rows()),
              fabric,
              views,
              sync,
              std::vector<std::vector<std::uint64_t>>(rc.epochs, std::vector<std::uint64_t>(opts.ranks, 0)),
              std::vector<std::vector<double>>(rc.epochs, std::vector<double>(opts.ranks, 0.0)),
              std::vector<std::size_t>(rc.epochs, 0),
              std::vector<EpochMetrics>(rc.epochs),
              std::vector<std::vector<BackwardEventRecord>>(opts.ranks),
              std::vector<std::vector<LayerParams>>(opts.ranks),
              scope};

  std::vector<std::exception_ptr> errors(opts.ranks);
  std::vector<std::thread> workers;
  for (std::size_t p = 0; p < opts.ranks; ++p)
    workers.emplace_back([&st, &errors, p] {
      try {
        run_rank(st, p);
      } catch (...) {
        errors[p] = std::current_exception();
      }
    });
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  res.trace.resize(rc.epochs);
  for (std::size_t e = 0; e < rc.epochs; ++e) {
    res.trace[e].metrics = st.metrics[e];
    res.trace[e].rank_ms = st.rank_ms[e];
    res.trace[e].param_hash = st.hashes[e];
    res.trace[e].halo_exchanges = st.exchanges[e];
  }
  res.params = std::move(st.params);
  res.events = std::move(st.events);
  res.halo_bytes = fabric.total_bytes(MessageFabric::kHalo);
  res.allreduce_bytes = fabric.total_bytes(MessageFabric::kAllreduce);
  res.peak_bytes = scope.peak_above_baseline();
  return res;
}

}  // namespace gnnforge
