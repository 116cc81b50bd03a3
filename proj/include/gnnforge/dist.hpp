#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "gnnforge/fabric.hpp"
#include "gnnforge/model.hpp"
#include "gnnforge/partition.hpp"

namespace gnnforge {

/// One rank's slice: owned nodes take local ids [0, num_local) in ascending
/// global order, ghosts follow, grouped by owner and then by global id.
struct RankContext {
  std::size_t rank = 0;
  std::size_t num_local = 0;
  std::size_t num_ghost = 0;
  CsrGraph local_graph;  // owned rows are full; ghost rows are empty
  ReverseAdjacency reverse;
  std::unordered_map<NodeId, NodeId> g2l;
  std::vector<NodeId> l2g;
  std::vector<std::uint32_t> ghost_owners;  // indexed by local id - num_local
  FeatureStore features;                    // (num_local + num_ghost) x F, ghost rows start at zero
  std::vector<std::uint32_t> labels;        // owned nodes only
  std::vector<LayerParams> params;

  std::size_t num_rows() const noexcept { return num_local + num_ghost; }
};

struct HaloPlan {
  /// Indexed by peer rank; empty lists mean no message to or from that peer.
  std::vector<std::vector<NodeId>> send;  // local ids of owned rows the peer reads
  std::vector<std::vector<NodeId>> recv;  // local ghost ids owned by the peer
};

struct LocalViews {
  std::vector<RankContext> contexts;
  std::vector<HaloPlan> plans;
};

/// Row u is placed with the owner of u; every column endpoint it does not own
/// becomes a ghost. Edge order and edge values are preserved.
LocalViews build_local_views(const CsrGraph& g, const DenseMatrix& features, const std::vector<std::uint32_t>& labels,
                             const PartitionMap& map);

/// Split-phase ghost refresh for one rank: begin() packs owned boundary rows
/// and posts every send and receive; finish() waits and unpacks into the
/// ghost rows.
class HaloExchange {
 public:
  HaloExchange(const RankContext& ctx, const HaloPlan& plan, MessageFabric& fabric);
  void begin(const DenseMatrix& m);
  void finish(DenseMatrix& m);

 private:
  const RankContext& ctx_;
  const HaloPlan& plan_;
  MessageFabric& fabric_;
  std::vector<MessageFabric::RecvRequest> pending_;
  std::size_t cols_ = 0;
  bool active_ = false;
};

/// Called concurrently by every rank; afterwards each ghost row equals the
/// owner's row bit for bit.
void exchange_ghost(const RankContext& ctx, const HaloPlan& plan, MessageFabric& fabric, DenseMatrix& m);

/// Adjoint of exchange_ghost: ghost rows are added into their owners' rows
/// (peers in ascending rank order) and then cleared.
void reduce_ghost_gradients(const RankContext& ctx, const HaloPlan& plan, MessageFabric& fabric, DenseMatrix& g);

/// Runs exchange_ghost on every rank from its own thread.
void exchange_ghost_all(const LocalViews& views, MessageFabric& fabric, std::vector<DenseMatrix>& mats);

class ReplicaDivergence : public std::runtime_error {
 public:
  explicit ReplicaDivergence(std::size_t epoch)
      : std::runtime_error("parameter replicas diverged at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

struct DistOptions {
  std::size_t ranks = 1;
  PartitionOptions partition;
  bool pipelined = true;
  bool record_events = false;
  /// Test hook: perturbs rank 1's weights after this epoch's update.
  std::optional<std::size_t> inject_divergence_at;
};

enum class BackwardEvent { AllreduceIssue, DxBegin, DxEnd, AllreduceWait };

struct BackwardEventRecord {
  std::size_t epoch;
  std::size_t layer;
  BackwardEvent event;
};

struct DistEpochMetrics {
  EpochMetrics metrics;
  std::vector<double> rank_ms;
  std::vector<std::uint64_t> param_hash;
  std::size_t halo_exchanges = 0;  // forward exchanges per rank this epoch
};

struct DistTrainResult {
  std::vector<DistEpochMetrics> trace;
  std::vector<std::vector<LayerParams>> params;  // one replica per rank
  TrainConfig config;
  ExecutionMode mode = ExecutionMode::Dense;
  PartitionResult partition;
  std::vector<std::vector<BackwardEventRecord>> events;  // per rank
  std::uint64_t halo_bytes = 0;
  std::uint64_t allreduce_bytes = 0;
  std::size_t peak_bytes = 0;
};

/// Bulk-synchronous data-parallel training over in-process ranks. Without a
/// map the graph is partitioned with partition_hierarchical.
DistTrainResult train_distributed(DatasetBundle& bundle, const TrainConfig& cfg, const DistOptions& opts,
                                  std::optional<PartitionMap> map = std::nullopt);

struct CostModelParams {
  double alpha = 1e-6;      // seconds per message
  double beta = 1e-9;       // seconds per byte
  double eta_flops = 1e9;   // sustained rate per rank

  void validate() const;
};

struct CostPrediction {
  std::vector<double> comp;
  std::vector<double> halo;
  double grad = 0.0;
  std::vector<double> total;
  double epoch = 0.0;  // max over ranks
};

/// comp_p = sum deg(v) F / eta; halo_p = sum over peers with a non-empty
/// halo of alpha + beta |halo| F 4; grad = 2(P-1) alpha + 2 (P-1)/P beta |W| 4.
CostPrediction predict_epoch_time(const PartitionStats& stats, const CostModelParams& cost, std::size_t features,
                                  std::size_t param_count, std::size_t ranks);

}  // namespace gnnforge
