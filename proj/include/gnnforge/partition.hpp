#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gnnforge/graph.hpp"

namespace gnnforge {

struct PartitionOptions {
  std::size_t k = 2;
  double epsilon = 1.03;
  double epsilon_relaxed = 1.20;
  std::size_t coarsen_target = 0;  // 0: 4k
  std::size_t refine_passes = 10;

  void validate() const;
  std::size_t effective_coarsen_target() const noexcept { return coarsen_target ? coarsen_target : 4 * k; }
};

struct PartitionMap {
  std::vector<std::uint32_t> assign;
  std::size_t k = 1;

  void validate(std::size_t num_nodes) const;
  bool operator==(const PartitionMap&) const = default;
};

struct PartitionStats {
  std::size_t edge_cut = 0;  // unordered node pairs joined by an edge, split across ranks
  std::vector<std::size_t> vertex_counts;
  std::vector<std::size_t> degree_loads;  // sum of deg(v) + 1
  double size_variance = 0.0;
  double max_over_mean_load = 0.0;
  /// halo[p][r]: distinct nodes owned by r that rank p reads as ghosts.
  std::vector<std::vector<std::size_t>> halo;
};

enum class PartitionPhase { Trivial, Multilevel, RecursiveBisection, Components, Greedy };

std::string to_string(PartitionPhase p);

struct PartitionResult {
  PartitionMap map;
  PartitionStats stats;
  PartitionPhase phase = PartitionPhase::Trivial;
};

/// Phase I (multilevel k-way at epsilon, then recursive bisection at
/// epsilon_relaxed), Phase II (component bin packing) when the graph is
/// disconnected, Phase III (greedy by degree) otherwise.
PartitionResult partition_hierarchical(const CsrGraph& g, const PartitionOptions& opts);

/// Vertex weight deg(v)+1; nullopt if some rank exceeds epsilon * total / k
/// after refinement.
std::optional<PartitionMap> multilevel_kway(const CsrGraph& g, const PartitionOptions& opts,
                                            std::optional<double> epsilon = std::nullopt);
std::optional<PartitionMap> recursive_bisection(const CsrGraph& g, const PartitionOptions& opts);

/// Undirected connectivity; ids are dense and ordered by first-seen node.
std::vector<std::uint32_t> find_components(const CsrGraph& g);
/// Best-fit decreasing: sizes descending (ties by index), each to the
/// lightest rank (ties to the lowest id). Returns the rank per item.
std::vector<std::uint32_t> binpack_sizes(const std::vector<std::size_t>& sizes, std::size_t k);
PartitionMap binpack_components(const std::vector<std::uint32_t>& components, std::size_t k);

/// Degree descending (ties by id), each to the rank of minimum load (ties to
/// the lowest id), load += deg(v) + 1.
PartitionMap greedy_degree_partition(const CsrGraph& g, std::size_t k);

PartitionStats evaluate_partition(const CsrGraph& g, const PartitionMap& map);

PartitionMap random_balanced_partition(std::size_t num_nodes, std::size_t k, std::uint64_t seed);

void write_partition(const std::string& path, const PartitionMap& map);
PartitionMap load_partition(const std::string& path, std::size_t k);
std::string stats_to_json(const PartitionStats& s, PartitionPhase phase);

}  // namespace gnnforge
