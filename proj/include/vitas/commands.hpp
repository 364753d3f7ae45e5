#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vitas/config.hpp"
#include "vitas/rds.hpp"

namespace vitas {

/// Problems caused by the invocation (bad flags, missing files); exit code 1.
class UserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int { kExitOk = 0, kExitUser = 1, kExitInternal = 2 };

struct CommonOptions {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<std::string> checkpoint;
  std::optional<std::string> precision;
};

inline constexpr const char* kCheckpointFile = "checkpoint.vtas";
inline constexpr const char* kRunConfigFile = "run.cfg";
inline constexpr const char* kManifestFile = "manifest.csv";

/// Config from --config (or defaults), with --seed/--precision applied.
RunConfig resolve_config(const CommonOptions& opts);

/// Training: writes <out>/checkpoint.vtas (overwritten periodically),
/// <out>/run.cfg and <out>/train_log.csv; rows are echoed to `log`.
/// With --checkpoint, resumes parameters and optimizer state from it.
int cmd_train(const CommonOptions& opts, std::ostream& log);

/// Per-sample and pooled EPE/PEP{1,2,3,5}/D1 as CSV to `out` and
/// <out>/eval.csv. Uses the run.cfg next to the checkpoint unless --config is
/// given. data_dir selects a gen-data directory instead of the configured set.
int cmd_eval(const CommonOptions& opts, const std::optional<std::string>& data_dir, std::ostream& out);

/// Writes <out>/disparity.pfm and <out>/disparity.png.
int cmd_infer(const CommonOptions& opts, const std::string& left, const std::string& right, std::ostream& log);

int cmd_bench(const CommonOptions& opts, const std::vector<std::int64_t>& sizes, std::int64_t channels,
              std::ostream& out);

/// Emits `count` samples (left/right PNG, gt PFM) plus a manifest into <out>.
int cmd_gen_data(const CommonOptions& opts, std::int64_t count, std::ostream& log);

struct ManifestRow {
  std::string id;
  RdsOptions options;
};
std::vector<ManifestRow> read_manifest(const std::string& dir);
/// Loads the images and ground truth listed in a gen-data directory.
std::vector<StereoSample> load_dataset(const std::string& dir);

/// Synthetic split described by the config: seeds base_seed + i.
std::vector<StereoSample> synthetic_split(const DataConfig& data, int d_max, std::uint64_t base_seed,
                                          std::int64_t count);

/// Deterministic sample index for (seed, step, slot), independent of history.
std::int64_t sample_index(std::uint64_t seed, std::int64_t step, std::int64_t slot, std::int64_t count);

}  // namespace vitas
