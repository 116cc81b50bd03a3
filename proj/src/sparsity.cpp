#include "gnnforge/sparsity.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <random>

#include "gnnforge/errors.hpp"
#include "gnnforge/kernels.hpp"

namespace gnnforge {
namespace {

std::atomic<std::size_t> g_conversions{0};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string to_string(ExecutionMode m) { return m == ExecutionMode::Sparse ? "Sparse" : "Dense"; }

SparsityPolicy SparsityPolicy::from_gamma(double gamma) {
  gamma = std::clamp(gamma, 0.0, 1.0);
  return {gamma, 1.0 - gamma};
}

ExecutionMode decide_mode(double sparsity, const SparsityPolicy& policy) {
  if (policy.tau >= 1.0) return ExecutionMode::Dense;
  return sparsity >= policy.tau ? ExecutionMode::Sparse : ExecutionMode::Dense;
}

void materialize_sparse_views(FeatureStore& f) {
  if (f.has_sparse_views()) return;
  f.sparse_csr = dense_to_csr(f.dense);
  f.sparse_csc = csr_to_csc(f.sparse_csr->view());
  g_conversions.fetch_add(1, std::memory_order_relaxed);
}

ExecutionMode select_mode(FeatureStore& f, const SparsityPolicy& policy) {
  const ExecutionMode mode = decide_mode(f.sparsity, policy);
  if (mode == ExecutionMode::Sparse) materialize_sparse_views(f);
  return mode;
}

FeatureStore sparsify(const FeatureStore& f) {
  FeatureStore out = f;
  out.sparse_csr.reset();
  out.sparse_csc.reset();
  materialize_sparse_views(out);
  return out;
}

FeatureStore densify(const FeatureStore& f) {
  if (!f.sparse_csr) return FeatureStore(f.dense);
  return FeatureStore(to_dense(f.sparse_csr->view()));
}

std::size_t conversion_count() noexcept { return g_conversions.load(std::memory_order_relaxed); }

std::vector<BenchShape> default_bench_shapes() {
  return {{2048, 512, 32, 0.90}, {4096, 256, 32, 0.95}, {1024, 1024, 64, 0.99}};
}

BenchTimer wallclock_bench_timer() {
  return [](const BenchShape& shape, BenchKernel kernel) {
    std::mt19937 rng(1234);
    std::uniform_real_distribution<float> val(-1.0f, 1.0f);
    std::bernoulli_distribution keep(1.0 - shape.sparsity);
    DenseMatrix x(shape.rows, shape.in_features);
    for (float& v : x.values())
      if (keep(rng)) v = val(rng);
    DenseMatrix w(shape.in_features, shape.out_features);
    for (float& v : w.values()) v = val(rng);
    const CsrMatrix csr = dense_to_csr(x);

    const auto t0 = std::chrono::steady_clock::now();
    DenseMatrix y = kernel == BenchKernel::DenseGemm ? gemm(x, w) : spmm_tiled(csr.view(), w);
    const auto t1 = std::chrono::steady_clock::now();
    volatile float sink = y.empty() ? 0.0f : y.values()[0];
    (void)sink;
    return std::chrono::duration<double>(t1 - t0).count();
  };
}

CalibrationResult calibrate_gamma(std::span<const BenchShape> shapes, const BenchTimer& timer, std::size_t repeats) {
  CalibrationResult res;
  if (shapes.empty() || repeats == 0) throw std::invalid_argument("calibrate_gamma: need shapes and repeats");
  for (const BenchShape& shape : shapes) {
    double t_med[2] = {0.0, 0.0};
    for (int k = 0; k < 2; ++k) {
      std::vector<double> times;
      for (std::size_t r = 0; r < repeats; ++r)
        times.push_back(timer(shape, k == 0 ? BenchKernel::DenseGemm : BenchKernel::SparseSpmm));
      const double med = median(times);
      const auto [lo, hi] = std::minmax_element(times.begin(), times.end());
      if (med <= 0.0 || (*hi - *lo) / med > 0.5) res.stable = false;
      t_med[k] = med;
    }
    const double dense_flops = 2.0 * double(shape.rows) * double(shape.in_features) * double(shape.out_features);
    const double sparse_flops = dense_flops * (1.0 - shape.sparsity);
    const double thr_dense = t_med[0] > 0 ? dense_flops / t_med[0] : 0.0;
    double thr_sparse = 0.0;
    if (std::isinf(t_med[1])) thr_sparse = 0.0;
    else if (t_med[1] > 0) thr_sparse = sparse_flops / t_med[1];
    res.ratios.push_back(thr_dense > 0 ? thr_sparse / thr_dense : 0.0);
  }
  if (!res.stable) {
    res.warning = "calibration unstable: timing spread above 50% across repeats; using default gamma";
    res.policy = SparsityPolicy::from_gamma(SparsityPolicy::kDefaultGamma);
  } else {
    res.policy = SparsityPolicy::from_gamma(median(res.ratios));
  }
  return res;
}

void save_calibration(const std::string& path, const SparsityPolicy& policy) {
  nlohmann::json j{{"gamma", policy.gamma}, {"tau", policy.tau}, {"timestamp", utc_timestamp()}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

std::optional<SparsityPolicy> load_calibration(const std::string& path) {
  if (!std::filesystem::exists(path)) return std::nullopt;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    const auto j = nlohmann::json::parse(in);
    return SparsityPolicy{j.at("gamma").get<double>(), j.at("tau").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": malformed calibration file: " + e.what());
  }
}

}  // namespace gnnforge
