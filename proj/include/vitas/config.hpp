#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "vitas/stereo_model.hpp"

namespace vitas {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct OptimConfig {
  double lr = 3e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
  std::int64_t steps = 2000;
  std::int64_t warmup_steps = 100;
  std::int64_t batch_size = 4;
};

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" or "directory"
  std::string train_dir;             // gen-data output, used when source = directory
  std::string eval_dir;
  std::int64_t train_samples = 400;
  std::int64_t eval_samples = 50;
  std::int64_t width = 128;
  std::int64_t height = 64;
  double density = 1.0;
  int dot_size = 1;
  bool binary = false;
  bool vflip = false;  // training pairs are flipped upside down with probability 1/2
  std::uint64_t train_seed = 1000;  // sample i uses train_seed + i
  std::uint64_t eval_seed = 900000;
};

struct RunSettings {
  std::uint64_t seed = 0;
  std::string precision = "f32";  // f32 or f64
  std::int64_t log_interval = 50;
  std::int64_t checkpoint_interval = 200;
  std::int64_t stop_after = 0;  // pause after this many total steps; 0 runs to optim.steps
};

struct RunConfig {
  ModelConfig model;
  OptimConfig optim;
  DataConfig data;
  RunSettings run;

  void validate() const;
};

/// key = value lines under [model], [optim], [data], [run]; '#' starts a
/// comment. Unknown sections or keys are errors; omitted keys keep defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
/// Canonical form listing every key; parse_config(print_config(c)) == c.
std::string print_config(const RunConfig& config);
void save_config(const std::string& path, const RunConfig& config);

}  // namespace vitas
