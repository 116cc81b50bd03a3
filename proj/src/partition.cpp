#include "gnnforge/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>

#include "gnnforge/errors.hpp"
#include "json.hpp"

namespace gnnforge {

void PartitionOptions::validate() const {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (!(epsilon > 1.0) || !(epsilon <= epsilon_relaxed))
    throw std::invalid_argument("need 1 < epsilon <= epsilon_relaxed");
}

void PartitionMap::validate(std::size_t num_nodes) const {
  if (assign.size() != num_nodes) throw DimensionError("partition map length differs from the node count");
  for (std::uint32_t r : assign)
    if (r >= k) throw RangeError("rank id " + std::to_string(r) + " >= k = " + std::to_string(k));
}

std::string to_string(PartitionPhase p) {
  switch (p) {
    case PartitionPhase::Trivial: return "trivial";
    case PartitionPhase::Multilevel: return "multilevel";
    case PartitionPhase::RecursiveBisection: return "recursive_bisection";
    case PartitionPhase::Components: return "components";
    case PartitionPhase::Greedy: return "greedy";
  }
  return "?";
}

namespace {

// Undirected weighted graph used by the multilevel scheme. Neighbor lists are
// sorted by id and free of self-loops.
struct WGraph {
  std::size_t n = 0;
  std::vector<std::size_t> xadj{0};
  std::vector<std::uint32_t> adj;
  std::vector<std::int64_t> ew;
  std::vector<std::int64_t> vw;

  std::int64_t total_weight() const { return std::accumulate(vw.begin(), vw.end(), std::int64_t{0}); }
  std::size_t degree(std::size_t u) const { return xadj[u + 1] - xadj[u]; }
};

// Symmetrized neighbor lists (unordered pairs, no self-loops).
std::vector<std::vector<std::uint32_t>> undirected_lists(const CsrGraph& g) {
  std::vector<std::vector<std::uint32_t>> nb(g.num_nodes);
  for (std::size_t u = 0; u < g.num_nodes; ++u)
    for (NodeId v : g.neighbors(u))
      if (v != u) {
        nb[u].push_back(v);
        nb[v].push_back(static_cast<std::uint32_t>(u));
      }
  for (auto& l : nb) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }
  return nb;
}

WGraph fine_graph(const CsrGraph& g) {
  const auto nb = undirected_lists(g);
  WGraph w;
  w.n = g.num_nodes;
  w.xadj.assign(w.n + 1, 0);
  for (std::size_t u = 0; u < w.n; ++u) {
    w.xadj[u + 1] = w.xadj[u] + nb[u].size();
    w.adj.insert(w.adj.end(), nb[u].begin(), nb[u].end());
    w.vw.push_back(static_cast<std::int64_t>(g.degree(u)) + 1);
  }
  w.ew.assign(w.adj.size(), 1);
  return w;
}

WGraph collapse(const WGraph& g, const std::vector<std::uint32_t>& cmap, std::size_t cn) {
  WGraph c;
  c.n = cn;
  c.vw.assign(cn, 0);
  std::vector<std::vector<std::uint32_t>> members(cn);
  for (std::size_t u = 0; u < g.n; ++u) {
    c.vw[cmap[u]] += g.vw[u];
    members[cmap[u]].push_back(static_cast<std::uint32_t>(u));
  }
  std::vector<std::int64_t> acc(cn, 0);
  std::vector<std::uint32_t> touched;
  c.xadj.assign(cn + 1, 0);
  for (std::size_t cu = 0; cu < cn; ++cu) {
    touched.clear();
    for (std::uint32_t u : members[cu])
      for (std::size_t e = g.xadj[u]; e < g.xadj[u + 1]; ++e) {
        const std::uint32_t cv = cmap[g.adj[e]];
        if (cv == cu) continue;
        if (acc[cv] == 0) touched.push_back(cv);
        acc[cv] += g.ew[e];
      }
    std::sort(touched.begin(), touched.end());
    for (std::uint32_t cv : touched) {
      c.adj.push_back(cv);
      c.ew.push_back(acc[cv]);
      acc[cv] = 0;
    }
    c.xadj[cu + 1] = c.adj.size();
  }
  return c;
}

// Heavy-edge matching in decreasing-degree order; pairs heavier than
// max_vw are not formed. Returns the coarse map and coarse node count.
std::size_t match_heavy_edges(const WGraph& g, std::int64_t max_vw, std::vector<std::uint32_t>& cmap) {
  constexpr std::uint32_t kFree = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> order(g.n);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return g.degree(a) > g.degree(b); });
  std::vector<std::uint32_t> mate(g.n, kFree);
  for (std::uint32_t u : order) {
    if (mate[u] != kFree) continue;
    std::uint32_t best = kFree;
    std::int64_t best_w = 0;
    for (std::size_t e = g.xadj[u]; e < g.xadj[u + 1]; ++e) {
      const std::uint32_t v = g.adj[e];
      if (mate[v] != kFree || g.vw[u] + g.vw[v] > max_vw) continue;
      if (best == kFree || g.ew[e] > best_w) {
        best = v;
        best_w = g.ew[e];
      }
    }
    if (best == kFree) {
      mate[u] = u;
    } else {
      mate[u] = best;
      mate[best] = u;
    }
  }
  cmap.assign(g.n, kFree);
  std::uint32_t next = 0;
  for (std::size_t u = 0; u < g.n; ++u) {
    if (cmap[u] != kFree) continue;
    cmap[u] = next;
    cmap[mate[u]] = next;
    ++next;
  }
  return next;
}

// Greedy graph growing: each rank in turn absorbs the frontier node most
// connected to it until its weight target is met; the last rank takes the rest.
std::vector<std::uint32_t> grow_regions(const WGraph& g, const std::vector<double>& targets) {
  const std::size_t k = targets.size();
  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> part(g.n, kNone);
  const double total = static_cast<double>(g.total_weight());
  std::size_t next_seed = 0;
  for (std::size_t p = 0; p + 1 < k; ++p) {
    const double goal = targets[p] * total;
    double weight = 0.0;
    std::vector<std::int64_t> conn(g.n, 0);
    using Item = std::pair<std::int64_t, std::int64_t>;  // (connectivity, -id)
    std::priority_queue<Item> frontier;
    while (true) {
      std::uint32_t x = kNone;
      while (!frontier.empty()) {
        auto [c, nid] = frontier.top();
        frontier.pop();
        const auto v = static_cast<std::uint32_t>(-nid);
        if (part[v] == kNone && conn[v] == c) {
          x = v;
          break;
        }
      }
      if (x == kNone) {
        while (next_seed < g.n && part[next_seed] != kNone) ++next_seed;
        if (next_seed >= g.n) break;
        x = static_cast<std::uint32_t>(next_seed);
      }
      const double after = weight + static_cast<double>(g.vw[x]);
      if (weight > 0.0 && after > goal && after - goal > goal - weight) break;
      part[x] = static_cast<std::uint32_t>(p);
      weight = after;
      for (std::size_t e = g.xadj[x]; e < g.xadj[x + 1]; ++e) {
        const std::uint32_t v = g.adj[e];
        if (part[v] != kNone) continue;
        conn[v] += g.ew[e];
        frontier.emplace(conn[v], -static_cast<std::int64_t>(v));
      }
      if (weight >= goal) break;
    }
  }
  for (auto& r : part)
    if (r == kNone) r = static_cast<std::uint32_t>(k - 1);
  return part;
}

// Boundary refinement: positive-gain moves within the balance bound,
// zero-gain moves that strictly even out loads, and forced moves out of
// overweight ranks.
void refine(const WGraph& g, std::vector<std::uint32_t>& part, const std::vector<double>& max_load,
            std::size_t passes) {
  const std::size_t k = max_load.size();
  std::vector<double> load(k, 0.0);
  for (std::size_t u = 0; u < g.n; ++u) load[part[u]] += static_cast<double>(g.vw[u]);
  std::vector<std::int64_t> conn(k, 0);
  std::vector<std::uint32_t> touched;
  for (std::size_t pass = 0; pass < passes; ++pass) {
    std::size_t moved = 0;
    for (std::size_t u = 0; u < g.n; ++u) {
      const std::uint32_t a = part[u];
      const double w = static_cast<double>(g.vw[u]);
      touched.clear();
      for (std::size_t e = g.xadj[u]; e < g.xadj[u + 1]; ++e) {
        const std::uint32_t r = part[g.adj[e]];
        if (conn[r] == 0) touched.push_back(r);
        conn[r] += g.ew[e];
      }
      const bool overweight = load[a] > max_load[a];
      std::uint32_t best = a;
      std::int64_t best_gain = 0;
      for (std::uint32_t q : touched) {
        if (q == a || load[q] + w > max_load[q]) continue;
        const std::int64_t gain = conn[q] - conn[a];
        const bool better_balance = load[q] + w < load[a];
        bool take = false;
        if (best == a)
          take = overweight || gain > 0 || (gain == 0 && better_balance);
        else
          take = gain > best_gain || (gain == best_gain && load[q] < load[best]);
        if (take) {
          best = q;
          best_gain = gain;
        }
      }
      if (best == a && overweight) {
        for (std::uint32_t q = 0; q < k; ++q)
          if (q != a && load[q] + w <= max_load[q] && (best == a || load[q] < load[best])) best = q;
      }
      for (std::uint32_t r : touched) conn[r] = 0;
      if (best != a) {
        part[u] = best;
        load[a] -= w;
        load[best] += w;
        ++moved;
      }
    }
    if (moved == 0) break;
  }
}

struct MultilevelOutcome {
  std::vector<std::uint32_t> part;
  bool feasible = false;
};

MultilevelOutcome multilevel(const WGraph& fine, const std::vector<double>& targets, double eps,
                             std::size_t coarsen_target, std::size_t passes) {
  const std::size_t k = targets.size();
  const double total = static_cast<double>(fine.total_weight());
  std::vector<double> max_load(k);
  for (std::size_t p = 0; p < k; ++p) max_load[p] = eps * targets[p] * total;
  const double smallest = *std::min_element(max_load.begin(), max_load.end());

  std::vector<WGraph> levels;
  std::vector<std::vector<std::uint32_t>> maps;
  const WGraph* cur = &fine;
  while (cur->n > coarsen_target) {
    std::vector<std::uint32_t> cmap;
    const std::size_t cn = match_heavy_edges(*cur, static_cast<std::int64_t>(smallest), cmap);
    if (static_cast<double>(cn) > 0.95 * static_cast<double>(cur->n)) break;
    levels.push_back(collapse(*cur, cmap, cn));
    maps.push_back(std::move(cmap));
    cur = &levels.back();
  }

  MultilevelOutcome out;
  out.part = grow_regions(*cur, targets);
  refine(*cur, out.part, max_load, passes);
  for (std::size_t l = levels.size(); l-- > 0;) {
    const WGraph& finer = l == 0 ? fine : levels[l - 1];
    std::vector<std::uint32_t> projected(finer.n);
    for (std::size_t u = 0; u < finer.n; ++u) projected[u] = out.part[maps[l][u]];
    out.part = std::move(projected);
    refine(finer, out.part, max_load, passes);
  }

  std::vector<double> load(k, 0.0);
  for (std::size_t u = 0; u < fine.n; ++u) load[out.part[u]] += static_cast<double>(fine.vw[u]);
  out.feasible = true;
  for (std::size_t p = 0; p < k; ++p) out.feasible = out.feasible && load[p] <= max_load[p];
  return out;
}

WGraph induced(const WGraph& g, const std::vector<std::uint32_t>& nodes) {
  constexpr std::uint32_t kOut = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> local(g.n, kOut);
  for (std::size_t i = 0; i < nodes.size(); ++i) local[nodes[i]] = static_cast<std::uint32_t>(i);
  WGraph s;
  s.n = nodes.size();
  s.xadj.assign(s.n + 1, 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::uint32_t u = nodes[i];
    s.vw.push_back(g.vw[u]);
    for (std::size_t e = g.xadj[u]; e < g.xadj[u + 1]; ++e)
      if (local[g.adj[e]] != kOut) {
        s.adj.push_back(local[g.adj[e]]);
        s.ew.push_back(g.ew[e]);
      }
    s.xadj[i + 1] = s.adj.size();
  }
  return s;
}

void bisect_into(const WGraph& g, const std::vector<std::uint32_t>& nodes, std::size_t k, std::uint32_t first_rank,
                 double eps, std::size_t coarsen_target, std::size_t passes, std::vector<std::uint32_t>& assign) {
  if (k == 1 || nodes.empty()) {
    for (std::uint32_t u : nodes) assign[u] = first_rank;
    return;
  }
  const std::size_t k1 = k / 2;
  const std::size_t k2 = k - k1;
  const WGraph sub = induced(g, nodes);
  const std::vector<double> targets = {static_cast<double>(k1) / static_cast<double>(k),
                                       static_cast<double>(k2) / static_cast<double>(k)};
  const auto outcome = multilevel(sub, targets, eps, coarsen_target, passes);
  std::vector<std::uint32_t> left, right;
  for (std::size_t i = 0; i < nodes.size(); ++i) (outcome.part[i] == 0 ? left : right).push_back(nodes[i]);
  bisect_into(g, left, k1, first_rank, eps, coarsen_target, passes, assign);
  bisect_into(g, right, k2, first_rank + static_cast<std::uint32_t>(k1), eps, coarsen_target, passes, assign);
}

bool within(const WGraph& g, const std::vector<std::uint32_t>& part, std::size_t k, double eps) {
  std::vector<double> load(k, 0.0);
  for (std::size_t u = 0; u < g.n; ++u) load[part[u]] += static_cast<double>(g.vw[u]);
  const double cap = eps * static_cast<double>(g.total_weight()) / static_cast<double>(k);
  return std::all_of(load.begin(), load.end(), [&](double l) { return l <= cap; });
}

}  // namespace

std::optional<PartitionMap> multilevel_kway(const CsrGraph& g, const PartitionOptions& opts,
                                            std::optional<double> epsilon) {
  opts.validate();
  const std::size_t k = opts.k;
  if (k == 1) return PartitionMap{std::vector<std::uint32_t>(g.num_nodes, 0), 1};
  const WGraph fine = fine_graph(g);
  const std::vector<double> targets(k, 1.0 / static_cast<double>(k));
  auto outcome = multilevel(fine, targets, epsilon.value_or(opts.epsilon), opts.effective_coarsen_target(),
                            opts.refine_passes);
  if (!outcome.feasible) return std::nullopt;
  return PartitionMap{std::move(outcome.part), k};
}

std::optional<PartitionMap> recursive_bisection(const CsrGraph& g, const PartitionOptions& opts) {
  opts.validate();
  const std::size_t k = opts.k;
  if (k == 1) return PartitionMap{std::vector<std::uint32_t>(g.num_nodes, 0), 1};
  const WGraph fine = fine_graph(g);
  const double levels = std::ceil(std::log2(static_cast<double>(k)));
  const double eps_level = std::pow(opts.epsilon_relaxed, 1.0 / levels);
  std::vector<std::uint32_t> nodes(fine.n);
  std::iota(nodes.begin(), nodes.end(), 0u);
  std::vector<std::uint32_t> assign(fine.n, 0);
  bisect_into(fine, nodes, k, 0, eps_level, opts.effective_coarsen_target(), opts.refine_passes, assign);
  const std::vector<double> max_load(
      k, opts.epsilon_relaxed * static_cast<double>(fine.total_weight()) / static_cast<double>(k));
  refine(fine, assign, max_load, opts.refine_passes);
  if (!within(fine, assign, k, opts.epsilon_relaxed)) return std::nullopt;
  return PartitionMap{std::move(assign), k};
}

std::vector<std::uint32_t> find_components(const CsrGraph& g) {
  const auto nb = undirected_lists(g);
  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> comp(g.num_nodes, kNone);
  std::uint32_t next = 0;
  std::vector<std::uint32_t> queue;
  for (std::size_t s = 0; s < g.num_nodes; ++s) {
    if (comp[s] != kNone) continue;
    queue.assign(1, static_cast<std::uint32_t>(s));
    comp[s] = next;
    for (std::size_t head = 0; head < queue.size(); ++head)
      for (std::uint32_t v : nb[queue[head]])
        if (comp[v] == kNone) {
          comp[v] = next;
          queue.push_back(v);
        }
    ++next;
  }
  return comp;
}

std::vector<std::uint32_t> binpack_sizes(const std::vector<std::size_t>& sizes, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k must be at least 1");
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });
  std::vector<std::size_t> load(k, 0);
  std::vector<std::uint32_t> rank(sizes.size(), 0);
  for (std::size_t c : order) {
    const auto lightest = static_cast<std::uint32_t>(std::min_element(load.begin(), load.end()) - load.begin());
    rank[c] = lightest;
    load[lightest] += sizes[c];
  }
  return rank;
}

PartitionMap binpack_components(const std::vector<std::uint32_t>& components, std::size_t k) {
  std::size_t count = 0;
  for (std::uint32_t c : components) count = std::max<std::size_t>(count, c + 1);
  std::vector<std::size_t> sizes(count, 0);
  for (std::uint32_t c : components) ++sizes[c];
  const auto rank = binpack_sizes(sizes, k);
  PartitionMap m{std::vector<std::uint32_t>(components.size()), k};
  for (std::size_t v = 0; v < components.size(); ++v) m.assign[v] = rank[components[v]];
  return m;
}

PartitionMap greedy_degree_partition(const CsrGraph& g, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k must be at least 1");
  std::vector<std::uint32_t> order(g.num_nodes);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return g.degree(a) > g.degree(b); });
  using Slot = std::pair<std::size_t, std::uint32_t>;  // (load, rank)
  std::priority_queue<Slot, std::vector<Slot>, std::greater<>> heap;
  for (std::uint32_t r = 0; r < k; ++r) heap.emplace(0, r);
  PartitionMap m{std::vector<std::uint32_t>(g.num_nodes, 0), k};
  for (std::uint32_t v : order) {
    auto [load, r] = heap.top();
    heap.pop();
    m.assign[v] = r;
    heap.emplace(load + g.degree(v) + 1, r);
  }
  return m;
}

PartitionStats evaluate_partition(const CsrGraph& g, const PartitionMap& map) {
  map.validate(g.num_nodes);
  const std::size_t k = map.k;
  PartitionStats s;
  s.vertex_counts.assign(k, 0);
  s.degree_loads.assign(k, 0);
  s.halo.assign(k, std::vector<std::size_t>(k, 0));
  std::vector<std::vector<std::uint32_t>> owned(k);
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    const auto p = map.assign[v];
    ++s.vertex_counts[p];
    s.degree_loads[p] += g.degree(v) + 1;
    owned[p].push_back(static_cast<std::uint32_t>(v));
  }
  const auto nb = undirected_lists(g);
  for (std::size_t u = 0; u < g.num_nodes; ++u)
    for (std::uint32_t v : nb[u])
      if (v > u && map.assign[u] != map.assign[v]) ++s.edge_cut;

  constexpr std::uint32_t kUnseen = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> mark(g.num_nodes, kUnseen);
  for (std::uint32_t p = 0; p < k; ++p)
    for (std::uint32_t u : owned[p])
      for (NodeId v : g.neighbors(u)) {
        const auto r = map.assign[v];
        if (r != p && mark[v] != p) {
          mark[v] = p;
          ++s.halo[p][r];
        }
      }

  const double mean_count = static_cast<double>(g.num_nodes) / static_cast<double>(k);
  for (std::size_t c : s.vertex_counts) s.size_variance += (static_cast<double>(c) - mean_count) * (c - mean_count);
  const double total_load = static_cast<double>(std::accumulate(s.degree_loads.begin(), s.degree_loads.end(),
                                                                std::size_t{0}));
  const double max_load = static_cast<double>(*std::max_element(s.degree_loads.begin(), s.degree_loads.end()));
  s.max_over_mean_load = total_load > 0 ? max_load / (total_load / static_cast<double>(k)) : 0.0;
  return s;
}

PartitionResult partition_hierarchical(const CsrGraph& g, const PartitionOptions& opts) {
  opts.validate();
  PartitionResult res;
  auto finish = [&](PartitionMap m, PartitionPhase phase) {
    res.stats = evaluate_partition(g, m);
    res.map = std::move(m);
    res.phase = phase;
    return res;
  };
  if (opts.k == 1 || g.num_nodes == 0)
    return finish(PartitionMap{std::vector<std::uint32_t>(g.num_nodes, 0), opts.k}, PartitionPhase::Trivial);
  if (auto m = multilevel_kway(g, opts)) return finish(std::move(*m), PartitionPhase::Multilevel);
  if (auto m = recursive_bisection(g, opts)) return finish(std::move(*m), PartitionPhase::RecursiveBisection);

  const auto comp = find_components(g);
  const std::size_t num_comp = comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
  // Components stay whole; with fewer components than ranks some rank would
  // sit idle, which Phase III avoids.
  if (num_comp > 1 && num_comp >= opts.k) return finish(binpack_components(comp, opts.k), PartitionPhase::Components);
  return finish(greedy_degree_partition(g, opts.k), PartitionPhase::Greedy);
}

PartitionMap random_balanced_partition(std::size_t num_nodes, std::size_t k, std::uint64_t seed) {
  std::vector<std::uint32_t> ids(num_nodes);
  std::iota(ids.begin(), ids.end(), 0u);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  PartitionMap m{std::vector<std::uint32_t>(num_nodes, 0), k};
  for (std::size_t i = 0; i < num_nodes; ++i) m.assign[ids[i]] = static_cast<std::uint32_t>(i % k);
  return m;
}

void write_partition(const std::string& path, const PartitionMap& map) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (std::uint32_t r : map.assign) out << r << '\n';
  if (!out) throw IoError("write failed: " + path);
}

PartitionMap load_partition(const std::string& path, std::size_t k) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  PartitionMap m{{}, k};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    long long r = -1;
    if (!(ss >> r)) throw ParseError(lineno, "expected a rank id");
    if (r < 0 || static_cast<std::size_t>(r) >= k)
      throw RangeError("line " + std::to_string(lineno) + ": rank " + std::to_string(r) + " out of range");
    m.assign.push_back(static_cast<std::uint32_t>(r));
  }
  return m;
}

std::string stats_to_json(const PartitionStats& s, PartitionPhase phase) {
  nlohmann::json j;
  j["phase_used"] = to_string(phase);
  j["edge_cut"] = s.edge_cut;
  j["vertex_counts"] = s.vertex_counts;
  j["degree_loads"] = s.degree_loads;
  j["size_variance"] = s.size_variance;
  j["max_over_mean_load"] = s.max_over_mean_load;
  j["halo"] = s.halo;
  return j.dump(2);
}

}  // namespace gnnforge
