#include "gnnforge/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "gnnforge/dist.hpp"
#include "gnnforge/dsl.hpp"
#include "gnnforge/errors.hpp"
#include "gnnforge/memtrack.hpp"
#include "gnnforge/partition.hpp"
#include "gnnforge/sparsity.hpp"
#include "json.hpp"

namespace gnnforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Failures while reading inputs or writing outputs.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("write failed: " + path.string());
}

template <class T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
  return ss.str();
}

std::vector<std::size_t> parse_dims(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(item, &pos);
      if (pos != item.size() || v <= 0) throw std::invalid_argument("");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("bad layer size '" + item + "' in '" + s + "'");
    }
  }
  return out;
}

std::array<double, 3> parse_cost_triplet(const std::string& s) {
  std::array<double, 3> v{};
  std::stringstream ss(s);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= 3) throw ConfigError("--cost-model takes alpha,beta,eta");
    try {
      v[i++] = std::stod(item);
    } catch (const std::exception&) {
      throw ConfigError("bad cost-model value '" + item + "'");
    }
  }
  if (i != 3) throw ConfigError("--cost-model takes alpha,beta,eta");
  return v;
}

DatasetBundle load_bundle(const RunConfig& rc) {
  try {
    if (!rc.dataset.empty()) return load_dataset(rc.dataset);
    if (rc.edges.empty() || rc.features.empty() || rc.labels.empty())
      throw ConfigError("need --dataset or all of --edges, --features and --labels");
    DatasetBundle b;
    b.features = FeatureStore(load_features(rc.features));
    b.graph = load_edge_list(rc.edges, b.features.num_rows());
    b.labels = load_labels(rc.labels);
    std::uint32_t max_label = 0;
    for (auto l : b.labels) max_label = std::max(max_label, l);
    b.num_classes = b.labels.empty() ? 0 : max_label + 1;
    b.validate();
    return b;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
}

SparsityPolicy resolve_policy(const RunConfig& rc) {
  if (rc.tau) {
    if (*rc.tau < 0.0 || *rc.tau > 1.0) throw ConfigError("tau must lie in [0, 1]");
    SparsityPolicy p;
    p.tau = *rc.tau;
    p.gamma = 1.0 - *rc.tau;
    return p;
  }
  if (rc.gamma) {
    if (*rc.gamma < 0.0 || *rc.gamma > 1.0) throw ConfigError("gamma must lie in [0, 1]");
    return SparsityPolicy::from_gamma(*rc.gamma);
  }
  if (!rc.calibration.empty()) {
    try {
      if (auto p = load_calibration(rc.calibration)) return *p;
    } catch (const std::exception& e) {
      throw InputError(e.what());
    }
  }
  return {};
}

fs::path make_run_dir(const RunConfig& rc) {
  fs::path dir = rc.out_dir.empty() ? fs::path("runs") / (utc_stamp() + "-seed" + std::to_string(rc.seed))
                                    : fs::path(rc.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void write_metrics(const fs::path& path, const std::vector<EpochMetrics>& trace) {
  std::ostringstream out;
  out << "epoch,loss,accuracy,epoch_ms,peak_bytes\n";
  for (const EpochMetrics& m : trace)
    out << m.epoch << ',' << std::setprecision(9) << m.loss << ',' << std::setprecision(6) << m.accuracy << ','
        << std::fixed << std::setprecision(3) << m.epoch_ms << std::defaultfloat << ',' << m.peak_bytes << '\n';
  write_file(path, out.str());
}

std::string fmt_json_number(double v) {
  std::ostringstream ss;
  ss << std::setprecision(9) << v;
  return ss.str();
}

int report(const std::exception& e, int code) {
  std::cerr << "error: " << e.what() << '\n';
  return code;
}

template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    return report(e, kConfigError);
  } catch (const InputError& e) {
    return report(e, kIoError);
  } catch (const ReplicaDivergence& e) {
    return report(e, kDivergence);
  } catch (const DivergenceError& e) {
    return report(e, kDivergence);
  } catch (const dsl::DslError& e) {
    return report(e, kCompileError);
  } catch (const std::exception& e) {
    return report(e, kFailure);
  }
}

// Flags given on the command line; each one overrides the config file.
struct TrainFlags {
  std::string config;
  std::optional<std::string> dataset, edges, features, labels, layers, aggregator, optimizer, mode, calibration, out,
      plan, cost_model;
  std::optional<float> lr, beta1, beta2, weight_decay;
  std::optional<std::size_t> epochs, ranks, tile_width, chunk_size;
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma, tau;
  std::optional<int> threads;
  bool prefetch = false;
  bool blocking = false;
};

void apply_plan(RunConfig& rc, const dsl::TrainingPlan& plan) {
  rc.layer_dims = plan.layer_dims;
  rc.aggregator = to_string(plan.aggregator);
  rc.optimizer = to_string(plan.optimizer.kind);
  rc.lr = plan.optimizer.lr;
  rc.beta1 = plan.optimizer.beta1;
  rc.beta2 = plan.optimizer.beta2;
  rc.weight_decay = plan.optimizer.weight_decay;
  rc.epochs = plan.epochs;
  if (rc.dataset.empty() && rc.edges.empty() && !plan.dataset.empty()) rc.dataset = plan.dataset;
}

void apply_flags(RunConfig& rc, const TrainFlags& f) {
  if (f.dataset) rc.dataset = *f.dataset;
  if (f.edges) rc.edges = *f.edges;
  if (f.features) rc.features = *f.features;
  if (f.labels) rc.labels = *f.labels;
  if (f.layers) rc.layer_dims = parse_dims(*f.layers);
  if (f.aggregator) rc.aggregator = *f.aggregator;
  if (f.optimizer) rc.optimizer = *f.optimizer;
  if (f.mode) rc.mode = *f.mode;
  if (f.calibration) rc.calibration = *f.calibration;
  if (f.out) rc.out_dir = *f.out;
  if (f.cost_model) rc.cost_model = parse_cost_triplet(*f.cost_model);
  if (f.lr) rc.lr = *f.lr;
  if (f.beta1) rc.beta1 = *f.beta1;
  if (f.beta2) rc.beta2 = *f.beta2;
  if (f.weight_decay) rc.weight_decay = *f.weight_decay;
  if (f.epochs) rc.epochs = *f.epochs;
  if (f.ranks) rc.ranks = *f.ranks;
  if (f.tile_width) rc.tile_width = *f.tile_width;
  if (f.chunk_size) rc.chunk_size = *f.chunk_size;
  if (f.seed) rc.seed = *f.seed;
  if (f.gamma) rc.gamma = *f.gamma;
  if (f.tau) rc.tau = *f.tau;
  if (f.threads) rc.threads = *f.threads;
  if (f.prefetch) rc.prefetch = true;
  if (f.blocking) rc.blocking = true;
}

struct CostRow {
  double comp = 0, halo = 0, grad = 0, total = 0;
};

// Sums the per-layer model: each layer exchanges its input width and reduces
// its own weight matrix.
std::vector<CostRow> predict_layers(const PartitionStats& stats, const CostModelParams& cost,
                                    const std::vector<std::size_t>& dims, std::size_t ranks) {
  std::vector<CostRow> rows(ranks);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const CostPrediction p = predict_epoch_time(stats, cost, dims[l], dims[l] * dims[l + 1], ranks);
    for (std::size_t r = 0; r < ranks; ++r) {
      rows[r].comp += p.comp[r];
      rows[r].halo += p.halo[r];
      rows[r].grad += p.grad;
      rows[r].total += p.total[r];
    }
  }
  return rows;
}

int cmd_train(const TrainFlags& flags) {
  RunConfig rc = flags.config.empty() ? RunConfig{} : load_run_config(flags.config);
  const std::string plan_path = flags.plan.value_or(rc.plan);
  if (!plan_path.empty()) {
    try {
      apply_plan(rc, dsl::plan_from_json(read_file(plan_path)));
    } catch (const InputError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string("plan ") + plan_path + ": " + e.what());
    }
  }
  apply_flags(rc, flags);
  TrainConfig tc = to_train_config(rc);
  tc.policy = resolve_policy(rc);

  DatasetBundle bundle = load_bundle(rc);
  try {
    tc = resolve_config(tc, bundle.features.num_cols(), bundle.num_classes);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  const fs::path dir = make_run_dir(rc);
  const double sparsity = bundle.features.sparsity;

  std::vector<EpochMetrics> trace;
  ExecutionMode mode = ExecutionMode::Dense;
  std::string phase = to_string(PartitionPhase::Trivial);
  std::size_t peak = 0;
  std::optional<std::size_t> largest;
  std::optional<PartitionStats> stats;
  std::vector<double> measured_ms(rc.ranks, 0.0);

  if (rc.ranks == 1) {
    TrainResult r = train(bundle, tc);
    trace = std::move(r.trace);
    mode = r.mode;
    peak = r.peak_bytes;
    largest = r.largest_allocation;
    for (const auto& m : trace) measured_ms[0] += m.epoch_ms;
    if (rc.cost_model) stats = evaluate_partition(bundle.graph, PartitionMap{std::vector<std::uint32_t>(bundle.graph.num_nodes, 0), 1});
  } else {
    DistOptions opts;
    opts.ranks = rc.ranks;
    opts.pipelined = !rc.blocking;
    DistTrainResult r = train_distributed(bundle, tc, opts);
    for (const auto& e : r.trace) {
      trace.push_back(e.metrics);
      for (std::size_t p = 0; p < rc.ranks; ++p) measured_ms[p] += e.rank_ms[p];
    }
    mode = r.mode;
    peak = r.peak_bytes;
    phase = to_string(r.partition.phase);
    stats = r.partition.stats;
    write_partition((dir / "partition.txt").string(), r.partition.map);
    write_file(dir / "partition_stats.json", stats_to_json(r.partition.stats, r.partition.phase));
  }

  write_metrics(dir / "metrics.csv", trace);
  json summary;
  summary["final_loss"] = trace.empty() ? json(nullptr) : json(trace.back().loss);
  summary["final_accuracy"] = trace.empty() ? json(nullptr) : json(trace.back().accuracy);
  summary["peak_bytes"] = peak;
  if (largest) summary["largest_allocation"] = *largest;
  summary["mode"] = to_string(mode);
  summary["phase_used"] = phase;
  summary["sparsity"] = sparsity;
  summary["tau"] = tc.policy.tau;
  summary["gamma"] = tc.policy.gamma;
  summary["epochs"] = trace.size();
  summary["ranks"] = rc.ranks;
  summary["seed"] = rc.seed;
  summary["aggregator"] = to_string(tc.aggregator);
  summary["optimizer"] = to_string(tc.optimizer);
  summary["layer_dims"] = tc.layer_dims;
  write_file(dir / "summary.json", summary.dump(2) + "\n");

  if (rc.cost_model && stats) {
    const CostModelParams cost{(*rc.cost_model)[0], (*rc.cost_model)[1], (*rc.cost_model)[2]};
    try {
      cost.validate();
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    const auto rows = predict_layers(*stats, cost, tc.layer_dims, rc.ranks);
    const double epochs = trace.empty() ? 1.0 : static_cast<double>(trace.size());
    std::ostringstream csv;
    csv << "rank,predicted_comp_s,predicted_halo_s,predicted_grad_s,predicted_total_s,measured_s\n";
    for (std::size_t p = 0; p < rc.ranks; ++p)
      csv << p << ',' << fmt_json_number(rows[p].comp) << ',' << fmt_json_number(rows[p].halo) << ','
          << fmt_json_number(rows[p].grad) << ',' << fmt_json_number(rows[p].total) << ','
          << fmt_json_number(measured_ms[p] / epochs / 1000.0) << '\n';
    write_file(dir / "cost_model.csv", csv.str());
    std::cout << csv.str();
  }

  std::cout << "run directory: " << dir.string() << '\n'
            << "mode " << to_string(mode) << " (sparsity " << fmt_json_number(sparsity) << ", tau "
            << fmt_json_number(tc.policy.tau) << "), phase " << phase << '\n';
  if (!trace.empty())
    std::cout << "final loss " << fmt_json_number(trace.back().loss) << ", accuracy "
              << fmt_json_number(trace.back().accuracy) << ", peak " << peak << " bytes\n";
  for (const auto& m : trace)
    if (!std::isfinite(m.loss)) throw DivergenceError("loss became non-finite at epoch " + std::to_string(m.epoch));
  return kOk;
}

struct PartitionFlags {
  std::string dataset, edges, out = ".";
  std::optional<std::size_t> num_nodes;
  PartitionOptions opts;
};

CsrGraph load_graph_only(const std::string& dataset, const std::string& edges, std::optional<std::size_t> n) {
  try {
    if (!dataset.empty()) return load_dataset(dataset).graph;
    if (edges.empty()) throw ConfigError("need --dataset or --edges");
    if (!n) throw ConfigError("--edges needs --num-nodes");
    return load_edge_list(edges, *n);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
}

int cmd_partition(const PartitionFlags& f) {
  try {
    f.opts.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  const CsrGraph g = load_graph_only(f.dataset, f.edges, f.num_nodes);
  const PartitionResult r = partition_hierarchical(g, f.opts);
  std::error_code ec;
  fs::create_directories(f.out, ec);
  if (ec) throw InputError("cannot create " + f.out);
  try {
    write_partition((fs::path(f.out) / "partition.txt").string(), r.map);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  const std::string stats = stats_to_json(r.stats, r.phase);
  write_file(fs::path(f.out) / "partition_stats.json", stats + "\n");
  std::cout << stats << '\n';
  return kOk;
}

struct CompileFlags {
  std::string source;
  std::optional<std::string> neurons, dataset, out;
  std::optional<std::int64_t> epochs;
  std::vector<std::string> sets;
};

int cmd_compile(const CompileFlags& f) {
  const std::string src = read_file(f.source);
  dsl::Bindings b;
  if (f.dataset) b.dataset = *f.dataset;
  if (f.neurons) {
    b.neurons = parse_dims(*f.neurons);
  } else if (f.dataset && fs::is_directory(*f.dataset)) {
    RunConfig rc;
    rc.dataset = *f.dataset;
    const DatasetBundle bundle = load_bundle(rc);
    b.neurons = {bundle.features.num_cols(), TrainConfig::kDefaultHidden, TrainConfig::kDefaultHidden,
                 bundle.num_classes};
  }
  if (f.epochs) b.ints["totalEpoch"] = *f.epochs;
  for (const std::string& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects name=integer, got '" + kv + "'");
    try {
      std::size_t pos = 0;
      const std::string value = kv.substr(eq + 1);
      b.ints[kv.substr(0, eq)] = std::stoll(value, &pos);
      if (pos != value.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ConfigError("--set expects name=integer, got '" + kv + "'");
    }
  }
  dsl::TrainingPlan plan;
  try {
    plan = dsl::lower(dsl::parse(src), b);
  } catch (const dsl::DslError& e) {
    std::cerr << f.source << ':' << e.loc().line << ':' << e.loc().col << ": " << to_string(e.kind()) << ": "
              << e.detail() << '\n';
    return kCompileError;
  }
  const std::string text = dsl::plan_to_json(plan) + "\n";
  if (f.out)
    write_file(*f.out, text);
  else
    std::cout << text;
  return kOk;
}

struct BenchFlags {
  std::string out = "calibration.json";
  std::size_t repeats = 5;
  bool quick = false;
};

int cmd_bench_gamma(const BenchFlags& f) {
  if (f.repeats == 0) throw ConfigError("--repeats must be positive");
  auto shapes = default_bench_shapes();
  if (f.quick)
    for (auto& s : shapes) s.rows = std::max<std::size_t>(64, s.rows / 8);
  const CalibrationResult r = calibrate_gamma(shapes, wallclock_bench_timer(), f.repeats);
  for (std::size_t i = 0; i < shapes.size() && i < r.ratios.size(); ++i)
    std::cout << "shape " << shapes[i].rows << 'x' << shapes[i].in_features << 'x' << shapes[i].out_features
              << " s=" << shapes[i].sparsity << ": sparse/dense throughput " << fmt_json_number(r.ratios[i]) << '\n';
  if (!r.stable) std::cerr << "warning: " << r.warning << '\n';
  std::cout << "gamma " << fmt_json_number(r.policy.gamma) << ", tau " << fmt_json_number(r.policy.tau) << '\n';
  try {
    save_calibration(f.out, r.policy);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  return kOk;
}

struct StatsFlags {
  RunConfig rc;
  std::optional<double> gamma, tau;
  std::optional<std::string> partition;
  std::optional<std::size_t> k;
};

int cmd_stats(StatsFlags f) {
  f.rc.gamma = f.gamma;
  f.rc.tau = f.tau;
  const SparsityPolicy policy = resolve_policy(f.rc);
  const DatasetBundle b = load_bundle(f.rc);
  const auto deg = degree_array(b.graph);
  json j;
  j["nodes"] = b.graph.num_nodes;
  j["edges"] = b.graph.num_edges();
  j["features"] = b.features.num_cols();
  j["classes"] = b.num_classes;
  j["sparsity"] = b.features.sparsity;
  j["tau"] = policy.tau;
  j["mode"] = to_string(decide_mode(b.features.sparsity, policy));
  if (!deg.empty()) {
    j["degree_min"] = *std::min_element(deg.begin(), deg.end());
    j["degree_max"] = *std::max_element(deg.begin(), deg.end());
    j["degree_mean"] = static_cast<double>(b.graph.num_edges()) / static_cast<double>(deg.size());
  }
  if (f.partition) {
    if (!f.k) throw ConfigError("--partition needs --k");
    PartitionMap m;
    try {
      m = load_partition(*f.partition, *f.k);
    } catch (const std::exception& e) {
      throw InputError(e.what());
    }
    if (m.assign.size() != b.graph.num_nodes) throw ConfigError("partition map length differs from the node count");
    j["partition"] = json::parse(stats_to_json(evaluate_partition(b.graph, m), PartitionPhase::Trivial));
    j["partition"].erase("phase_used");
  }
  std::cout << j.dump(2) << '\n';
  return kOk;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig rc;
  for (const auto& [key, v] : j.items()) {
    if (key == "dataset")
      rc.dataset = get_as<std::string>(v, key);
    else if (key == "edges")
      rc.edges = get_as<std::string>(v, key);
    else if (key == "features")
      rc.features = get_as<std::string>(v, key);
    else if (key == "labels")
      rc.labels = get_as<std::string>(v, key);
    else if (key == "layer_dims")
      rc.layer_dims = get_as<std::vector<std::size_t>>(v, key);
    else if (key == "aggregator")
      rc.aggregator = get_as<std::string>(v, key);
    else if (key == "optimizer")
      rc.optimizer = get_as<std::string>(v, key);
    else if (key == "lr")
      rc.lr = get_as<float>(v, key);
    else if (key == "beta1")
      rc.beta1 = get_as<float>(v, key);
    else if (key == "beta2")
      rc.beta2 = get_as<float>(v, key);
    else if (key == "weight_decay")
      rc.weight_decay = get_as<float>(v, key);
    else if (key == "epochs")
      rc.epochs = get_as<std::size_t>(v, key);
    else if (key == "seed")
      rc.seed = get_as<std::uint64_t>(v, key);
    else if (key == "gamma")
      rc.gamma = get_as<double>(v, key);
    else if (key == "tau")
      rc.tau = get_as<double>(v, key);
    else if (key == "mode")
      rc.mode = get_as<std::string>(v, key);
    else if (key == "calibration")
      rc.calibration = get_as<std::string>(v, key);
    else if (key == "ranks")
      rc.ranks = get_as<std::size_t>(v, key);
    else if (key == "blocking")
      rc.blocking = get_as<bool>(v, key);
    else if (key == "tile_width")
      rc.tile_width = get_as<std::size_t>(v, key);
    else if (key == "chunk_size")
      rc.chunk_size = get_as<std::size_t>(v, key);
    else if (key == "prefetch")
      rc.prefetch = get_as<bool>(v, key);
    else if (key == "threads")
      rc.threads = get_as<int>(v, key);
    else if (key == "out_dir")
      rc.out_dir = get_as<std::string>(v, key);
    else if (key == "plan")
      rc.plan = get_as<std::string>(v, key);
    else if (key == "cost_model")
      rc.cost_model = get_as<std::array<double, 3>>(v, key);
    else
      throw ConfigError("unknown config key '" + key + "'");
  }
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

TrainConfig to_train_config(const RunConfig& rc) {
  TrainConfig tc;
  tc.layer_dims = rc.layer_dims;
  const auto agg = parse_aggregator(rc.aggregator);
  if (!agg) throw ConfigError("unknown aggregator '" + rc.aggregator + "' (sum, mean, max, gcn)");
  tc.aggregator = *agg;
  const auto opt = parse_optimizer(rc.optimizer);
  if (!opt) throw ConfigError("unknown optimizer '" + rc.optimizer + "' (sgd, adam, adamw)");
  tc.optimizer = *opt;
  tc.lr = rc.lr;
  tc.beta1 = rc.beta1;
  tc.beta2 = rc.beta2;
  tc.weight_decay = rc.weight_decay;
  tc.epochs = rc.epochs;
  tc.seed = rc.seed;
  if (rc.mode == "dense")
    tc.force_mode = ExecutionMode::Dense;
  else if (rc.mode == "sparse")
    tc.force_mode = ExecutionMode::Sparse;
  else if (rc.mode != "auto")
    throw ConfigError("mode must be auto, dense or sparse");
  if (rc.ranks == 0) throw ConfigError("ranks must be at least 1");
  tc.tiles.tile_width = rc.tile_width;
  tc.tiles.chunk_size = rc.chunk_size;
  tc.tiles.prefetch = rc.prefetch;
  tc.tiles.num_threads = rc.threads;
  try {
    tc.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return tc;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Graph neural network training engine"};
  app.require_subcommand(1);

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset");
  train_cmd->add_option("--config", tf.config, "JSON config file (flags override it)");
  train_cmd->add_option("--dataset", tf.dataset, "Dataset directory (edges.txt, features.mfeat, labels.txt)");
  train_cmd->add_option("--edges", tf.edges, "Edge list file");
  train_cmd->add_option("--features", tf.features, "Feature matrix file");
  train_cmd->add_option("--labels", tf.labels, "Label file");
  train_cmd->add_option("--layers", tf.layers, "Layer sizes, e.g. 128,32,32,4");
  train_cmd->add_option("--aggregator", tf.aggregator, "sum, mean, max or gcn");
  train_cmd->add_option("--optimizer", tf.optimizer, "sgd, adam or adamw");
  train_cmd->add_option("--lr", tf.lr, "Learning rate");
  train_cmd->add_option("--beta1", tf.beta1);
  train_cmd->add_option("--beta2", tf.beta2);
  train_cmd->add_option("--weight-decay", tf.weight_decay);
  train_cmd->add_option("--epochs", tf.epochs);
  train_cmd->add_option("--seed", tf.seed);
  train_cmd->add_option("--gamma", tf.gamma, "Sparse/dense efficiency ratio; tau = 1 - gamma");
  train_cmd->add_option("--tau", tf.tau, "Sparsity threshold for the sparse path");
  train_cmd->add_option("--mode", tf.mode, "auto, dense or sparse");
  train_cmd->add_option("--calibration", tf.calibration, "Calibration file written by bench-gamma");
  train_cmd->add_option("--ranks", tf.ranks, "Number of in-process ranks");
  train_cmd->add_flag("--blocking", tf.blocking, "Blocking gradient all-reduce instead of the pipelined one");
  train_cmd->add_option("--tile-width", tf.tile_width);
  train_cmd->add_option("--chunk-size", tf.chunk_size);
  train_cmd->add_flag("--prefetch", tf.prefetch);
  train_cmd->add_option("--threads", tf.threads);
  train_cmd->add_option("--out", tf.out, "Run directory");
  train_cmd->add_option("--plan", tf.plan, "Training plan JSON from `compile`");
  train_cmd->add_option("--cost-model", tf.cost_model, "alpha,beta,eta: print predicted vs measured rank times");

  PartitionFlags pf;
  auto* part_cmd = app.add_subcommand("partition", "Partition a graph");
  part_cmd->add_option("--dataset", pf.dataset);
  part_cmd->add_option("--edges", pf.edges);
  part_cmd->add_option("--num-nodes", pf.num_nodes);
  part_cmd->add_option("-k,--k", pf.opts.k, "Number of parts")->required();
  part_cmd->add_option("--epsilon", pf.opts.epsilon);
  part_cmd->add_option("--epsilon-relaxed", pf.opts.epsilon_relaxed);
  part_cmd->add_option("--coarsen-target", pf.opts.coarsen_target);
  part_cmd->add_option("--refine-passes", pf.opts.refine_passes);
  part_cmd->add_option("--out", pf.out, "Output directory");

  CompileFlags cf;
  auto* compile_cmd = app.add_subcommand("compile", "Compile a training program to a plan");
  compile_cmd->add_option("source", cf.source, "Program file")->required();
  compile_cmd->add_option("--neurons", cf.neurons, "Layer sizes bound to the container parameter");
  compile_cmd->add_option("--dataset", cf.dataset, "Value of the String parameter");
  compile_cmd->add_option("--epochs", cf.epochs, "Value of totalEpoch");
  compile_cmd->add_option("--set", cf.sets, "name=integer binding");
  compile_cmd->add_option("--out", cf.out, "Write the plan here instead of stdout");

  BenchFlags bf;
  auto* bench_cmd = app.add_subcommand("bench-gamma", "Measure the sparse/dense efficiency ratio");
  bench_cmd->add_option("--out", bf.out);
  bench_cmd->add_option("--repeats", bf.repeats);
  bench_cmd->add_flag("--quick", bf.quick, "Smaller shapes");

  StatsFlags sf;
  auto* stats_cmd = app.add_subcommand("stats", "Describe a dataset");
  stats_cmd->add_option("--dataset", sf.rc.dataset);
  stats_cmd->add_option("--edges", sf.rc.edges);
  stats_cmd->add_option("--features", sf.rc.features);
  stats_cmd->add_option("--labels", sf.rc.labels);
  stats_cmd->add_option("--gamma", sf.gamma);
  stats_cmd->add_option("--tau", sf.tau);
  stats_cmd->add_option("--calibration", sf.rc.calibration);
  stats_cmd->add_option("--partition", sf.partition, "Partition map to evaluate");
  stats_cmd->add_option("--k", sf.k);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  return guarded([&]() -> int {
    if (train_cmd->parsed()) return cmd_train(tf);
    if (part_cmd->parsed()) return cmd_partition(pf);
    if (compile_cmd->parsed()) return cmd_compile(cf);
    if (bench_cmd->parsed()) return cmd_bench_gamma(bf);
    if (stats_cmd->parsed()) return cmd_stats(sf);
    return kConfigError;
  });
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("gnnforge");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace gnnforge::cli
