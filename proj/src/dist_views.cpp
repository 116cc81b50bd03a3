#include <algorithm>
#include <thread>

#include "gnnforge/dist.hpp"

namespace gnnforge {

LocalViews build_local_views(const CsrGraph& g, const DenseMatrix& features, const std::vector<std::uint32_t>& labels,
                             const PartitionMap& map) {
  map.validate(g.num_nodes);
  if (features.rows() != g.num_nodes) throw DimensionError("feature rows do not match the node count");
  if (!labels.empty() && labels.size() != g.num_nodes) throw DimensionError("label count does not match the node count");
  const std::size_t k = map.k;
  const std::size_t f = features.cols();
  LocalViews views;
  views.contexts.resize(k);
  views.plans.resize(k);

  std::vector<std::vector<NodeId>> owned(k);
  for (std::size_t v = 0; v < g.num_nodes; ++v) owned[map.assign[v]].push_back(static_cast<NodeId>(v));

  for (std::size_t p = 0; p < k; ++p) {
    RankContext& ctx = views.contexts[p];
    ctx.rank = p;
    ctx.num_local = owned[p].size();
    ctx.l2g = owned[p];
    for (std::size_t i = 0; i < owned[p].size(); ++i) ctx.g2l.emplace(owned[p][i], static_cast<NodeId>(i));

    std::vector<std::pair<std::uint32_t, NodeId>> ghosts;  // (owner, global)
    for (NodeId u : owned[p])
      for (NodeId v : g.neighbors(u))
        if (map.assign[v] != p) ghosts.emplace_back(map.assign[v], v);
    std::sort(ghosts.begin(), ghosts.end());
    ghosts.erase(std::unique(ghosts.begin(), ghosts.end()), ghosts.end());
    ctx.num_ghost = ghosts.size();
    for (const auto& [owner, v] : ghosts) {
      ctx.g2l.emplace(v, static_cast<NodeId>(ctx.l2g.size()));
      ctx.l2g.push_back(v);
      ctx.ghost_owners.push_back(owner);
    }

    const std::size_t n = ctx.num_rows();
    CsrGraph lg(n);
    for (std::size_t i = 0; i < ctx.num_local; ++i) {
      const NodeId u = owned[p][i];
      for (Offset e = g.row_ptr[u]; e < g.row_ptr[u + 1]; ++e) {
        lg.col_idx.push_back(ctx.g2l.at(g.col_idx[e]));
        if (g.weighted()) lg.edge_val.push_back(g.edge_val[e]);
      }
      lg.row_ptr[i + 1] = lg.col_idx.size();
    }
    for (std::size_t i = ctx.num_local; i < n; ++i) lg.row_ptr[i + 1] = lg.col_idx.size();
    ctx.local_graph = std::move(lg);
    ctx.reverse = ReverseAdjacency::build(ctx.local_graph);

    DenseMatrix x(n, f);
    for (std::size_t i = 0; i < ctx.num_local; ++i) {
      auto src = features.row(owned[p][i]);
      std::copy(src.begin(), src.end(), x.row(i).begin());
    }
    ctx.features = FeatureStore(std::move(x));
    if (!labels.empty())
      for (NodeId u : owned[p]) ctx.labels.push_back(labels[u]);

    HaloPlan& plan = views.plans[p];
    plan.send.assign(k, {});
    plan.recv.assign(k, {});
    for (std::size_t gi = 0; gi < ghosts.size(); ++gi)
      plan.recv[ghosts[gi].first].push_back(static_cast<NodeId>(ctx.num_local + gi));
  }
  // Rank r sends to p exactly the rows p lists as ghosts owned by r, in the
  // same (global id) order.
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t r = 0; r < k; ++r)
      for (NodeId ghost : views.plans[p].recv[r]) {
        const NodeId global = views.contexts[p].l2g[ghost];
        views.plans[r].send[p].push_back(views.contexts[r].g2l.at(global));
      }
  return views;
}

HaloExchange::HaloExchange(const RankContext& ctx, const HaloPlan& plan, MessageFabric& fabric)
    : ctx_(ctx), plan_(plan), fabric_(fabric) {}

void HaloExchange::begin(const DenseMatrix& m) {
  if (m.rows() != ctx_.num_rows()) throw DimensionError("halo exchange: matrix rows differ from local + ghost count");
  if (active_) throw ContractViolation("halo exchange already in flight");
  cols_ = m.cols();
  active_ = true;
  const std::size_t k = plan_.send.size();
  for (std::size_t r = 0; r < k; ++r) {
    const auto& rows = plan_.send[r];
    if (rows.empty()) continue;
    Bytes buf(rows.size() * cols_ * sizeof(float));
    auto* out = reinterpret_cast<float*>(buf.data());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto src = m.row(rows[i]);
      std::copy(src.begin(), src.end(), out + i * cols_);
    }
    fabric_.send(ctx_.rank, r, MessageFabric::kHalo, std::move(buf));
  }
  pending_.clear();
  for (std::size_t r = 0; r < k; ++r)
    if (!plan_.recv[r].empty()) pending_.push_back(fabric_.irecv(ctx_.rank, r, MessageFabric::kHalo));
}

void HaloExchange::finish(DenseMatrix& m) {
  if (!active_) throw ContractViolation("halo exchange finished without begin");
  if (m.rows() != ctx_.num_rows() || m.cols() != cols_) throw DimensionError("halo exchange: matrix shape changed");
  for (auto& req : pending_) {
    const Bytes in = req.wait();
    const auto& rows = plan_.recv[req.peer()];
    if (in.size() != rows.size() * cols_ * sizeof(float)) throw DimensionError("halo exchange: message size mismatch");
    const auto* vals = reinterpret_cast<const float*>(in.data());
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy(vals + i * cols_, vals + (i + 1) * cols_, m.row(rows[i]).begin());
  }
  pending_.clear();
  active_ = false;
}

void exchange_ghost(const RankContext& ctx, const HaloPlan& plan, MessageFabric& fabric, DenseMatrix& m) {
  HaloExchange ex(ctx, plan, fabric);
  ex.begin(m);
  ex.finish(m);
}

void reduce_ghost_gradients(const RankContext& ctx, const HaloPlan& plan, MessageFabric& fabric, DenseMatrix& g) {
  if (g.rows() != ctx.num_rows()) throw DimensionError("ghost reduction: matrix rows differ from local + ghost count");
  const std::size_t k = plan.send.size();
  const std::size_t f = g.cols();
  for (std::size_t r = 0; r < k; ++r) {
    const auto& rows = plan.recv[r];
    if (rows.empty()) continue;
    Bytes buf(rows.size() * f * sizeof(float));
    auto* out = reinterpret_cast<float*>(buf.data());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto src = g.row(rows[i]);
      std::copy(src.begin(), src.end(), out + i * f);
    }
    fabric.send(ctx.rank, r, MessageFabric::kHaloReverse, std::move(buf));
  }
  for (std::size_t r = 0; r < k; ++r) {
    const auto& rows = plan.send[r];
    if (rows.empty()) continue;
    const Bytes in = fabric.recv(ctx.rank, r, MessageFabric::kHaloReverse);
    if (in.size() != rows.size() * f * sizeof(float)) throw DimensionError("ghost reduction: message size mismatch");
    const auto* vals = reinterpret_cast<const float*>(in.data());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto dst = g.row(rows[i]);
      for (std::size_t c = 0; c < f; ++c) dst[c] += vals[i * f + c];
    }
  }
  for (std::size_t i = ctx.num_local; i < ctx.num_rows(); ++i) std::fill(g.row(i).begin(), g.row(i).end(), 0.0f);
}

void exchange_ghost_all(const LocalViews& views, MessageFabric& fabric, std::vector<DenseMatrix>& mats) {
  const std::size_t k = views.contexts.size();
  if (mats.size() != k) throw DimensionError("one matrix per rank required");
  for (std::size_t p = 0; p < k; ++p)
    if (mats[p].rows() != views.contexts[p].num_rows() || mats[p].cols() != mats.front().cols())
      throw DimensionError("halo exchange: matrix shape does not match rank " + std::to_string(p));
  std::vector<std::exception_ptr> errors(k);
  std::vector<std::thread> workers;
  for (std::size_t p = 0; p < k; ++p)
    workers.emplace_back([&, p] {
      try {
        exchange_ghost(views.contexts[p], views.plans[p], fabric, mats[p]);
      } catch (...) {
        errors[p] = std::current_exception();
      }
    });
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace gnnforge
