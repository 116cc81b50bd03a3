#include "generators.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <set>

#include <unistd.h>

namespace fixtures {

using gnnforge::Edge;

CsrGraph symmetric(std::size_t n, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs) {
  std::vector<Edge> edges;
  for (auto [a, b] : pairs) {
    edges.push_back({a, b});
    edges.push_back({b, a});
  }
  return CsrGraph::from_edges(n, std::move(edges), false);
}

CsrGraph random_directed(std::size_t n, std::size_t count, std::uint64_t seed, bool weighted) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> node(0, static_cast<std::uint32_t>(n - 1));
  std::uniform_real_distribution<float> w(0.1f, 1.0f);
  std::vector<Edge> edges;
  edges.reserve(count);
  while (edges.size() < count) {
    const auto a = node(rng), b = node(rng);
    if (a == b) continue;
    edges.push_back({a, b, weighted ? w(rng) : 1.0f});
  }
  return CsrGraph::from_edges(n, std::move(edges), weighted);
}

CsrGraph erdos_renyi(std::size_t n, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(p);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (std::uint32_t a = 0; a < n; ++a)
    for (std::uint32_t b = a + 1; b < n; ++b)
      if (coin(rng)) pairs.emplace_back(a, b);
  return symmetric(n, pairs);
}

CsrGraph barabasi_albert(std::size_t n, std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> targets;  // one entry per edge endpoint
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (std::uint32_t a = 0; a <= m && a < n; ++a)
    for (std::uint32_t b = a + 1; b <= m && b < n; ++b) {
      pairs.emplace_back(a, b);
      targets.push_back(a);
      targets.push_back(b);
    }
  for (std::uint32_t v = static_cast<std::uint32_t>(m + 1); v < n; ++v) {
    std::set<std::uint32_t> chosen;
    while (chosen.size() < m) {
      std::uniform_int_distribution<std::size_t> pick(0, targets.size() - 1);
      chosen.insert(targets[pick(rng)]);
    }
    for (auto t : chosen) {
      pairs.emplace_back(v, t);
      targets.push_back(v);
      targets.push_back(t);
    }
  }
  return symmetric(n, pairs);
}

CsrGraph star(std::size_t leaves) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (std::uint32_t v = 1; v <= leaves; ++v) pairs.emplace_back(0, v);
  return symmetric(leaves + 1, pairs);
}

CsrGraph ring(std::size_t n) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (std::uint32_t v = 0; v < n; ++v) pairs.emplace_back(v, static_cast<std::uint32_t>((v + 1) % n));
  return symmetric(n, pairs);
}

namespace {
void add_clique(std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs, std::uint32_t first, std::size_t size) {
  for (std::uint32_t a = 0; a < size; ++a)
    for (std::uint32_t b = a + 1; b < size; ++b) pairs.emplace_back(first + a, first + b);
}
}  // namespace

CsrGraph bridge_of_cliques(std::size_t a, std::size_t b) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  add_clique(pairs, 0, a);
  add_clique(pairs, static_cast<std::uint32_t>(a), b);
  pairs.emplace_back(static_cast<std::uint32_t>(a - 1), static_cast<std::uint32_t>(a));
  return symmetric(a + b, pairs);
}

CsrGraph disjoint_cliques(const std::vector<std::size_t>& sizes) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  std::uint32_t first = 0;
  for (auto s : sizes) {
    add_clique(pairs, first, s);
    first += static_cast<std::uint32_t>(s);
  }
  return symmetric(first, pairs);
}

DenseMatrix random_features(std::size_t n, std::size_t f, double sparsity, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> val(-1.0f, 1.0f);
  std::bernoulli_distribution zero(sparsity);
  DenseMatrix x(n, f);
  for (float& v : x.values()) {
    const float draw = val(rng);
    v = zero(rng) ? 0.0f : (draw == 0.0f ? 0.5f : draw);
  }
  return x;
}

DenseMatrix features_with_nnz(std::size_t n, std::size_t f, std::size_t nnz, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(n * f);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  DenseMatrix x(n, f);
  for (std::size_t i = 0; i < nnz; ++i) x.data()[idx[i]] = 1.0f + static_cast<float>(i % 7);
  return x;
}

DatasetBundle sbm(std::size_t n, std::size_t blocks, double p_in, double p_out, std::size_t features,
                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> labels(n);
  for (std::size_t v = 0; v < n; ++v) labels[v] = static_cast<std::uint32_t>(v * blocks / n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (std::uint32_t a = 0; a < n; ++a)
    for (std::uint32_t b = a + 1; b < n; ++b)
      if (u(rng) < (labels[a] == labels[b] ? p_in : p_out)) pairs.emplace_back(a, b);
  std::normal_distribution<float> noise(0.0f, 1.0f);
  DenseMatrix x(n, features);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t c = 0; c < features; ++c)
      x(v, c) = noise(rng) + (c % blocks == labels[v] ? 0.5f : 0.0f);
  DatasetBundle b;
  b.graph = symmetric(n, pairs);
  b.features = gnnforge::FeatureStore(std::move(x));
  b.labels = std::move(labels);
  b.num_classes = blocks;
  return b;
}

DatasetBundle random_dataset(CsrGraph g, std::size_t features, std::size_t classes, double sparsity,
                             std::uint64_t seed) {
  DatasetBundle b;
  const std::size_t n = g.num_nodes;
  b.graph = std::move(g);
  b.features = gnnforge::FeatureStore(random_features(n, features, sparsity, seed));
  std::mt19937_64 rng(seed ^ 0x5bd1e995u);
  std::uniform_int_distribution<std::uint32_t> cls(0, static_cast<std::uint32_t>(classes - 1));
  b.labels.resize(n);
  for (auto& l : b.labels) l = cls(rng);
  b.num_classes = classes;
  return b;
}

std::string temp_dir(const std::string& stem) {
  static std::atomic<int> counter{0};
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() /
                   ("gnnforge-" + stem + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace fixtures
