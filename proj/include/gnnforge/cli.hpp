#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gnnforge/model.hpp"

namespace gnnforge::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kIoError = 3,
  kDivergence = 4,
  kCompileError = 5,
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Settings for `train`. JSON config files use the same flat key names as
/// the fields below.
struct RunConfig {
  std::string dataset;  // directory with edges.txt, features.mfeat, labels.txt
  std::string edges;
  std::string features;
  std::string labels;
  std::vector<std::size_t> layer_dims;
  std::string aggregator = "gcn";
  std::string optimizer = "adam";
  float lr = 0.01f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float weight_decay = 0.0f;
  std::size_t epochs = 200;
  std::uint64_t seed = 42;
  std::optional<double> gamma;
  std::optional<double> tau;
  std::string mode = "auto";  // auto, dense, sparse
  std::string calibration;
  std::size_t ranks = 1;
  bool blocking = false;
  std::size_t tile_width = 32;
  std::size_t chunk_size = 64;
  bool prefetch = false;
  int threads = 0;
  std::string out_dir;
  std::string plan;
  std::optional<std::array<double, 3>> cost_model;  // alpha, beta, eta
};

/// Unknown keys and wrongly typed values raise ConfigError.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

/// Validates the settings and builds the trainer configuration (layer dims
/// may still be empty and are then resolved against the dataset).
TrainConfig to_train_config(const RunConfig& rc);

int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace gnnforge::cli
