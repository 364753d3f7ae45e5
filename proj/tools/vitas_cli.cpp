#include <CLI11.hpp>

#include <iostream>

#include "vitas/checkpoint.hpp"
#include "vitas/commands.hpp"
#include "vitas/pfm.hpp"

namespace {

void add_common(CLI::App* cmd, vitas::CommonOptions& o) {
  cmd->add_option("--config", o.config, "Run configuration file (key = value with [sections])");
  cmd->add_option("--seed", o.seed, "Seed overriding run.seed");
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
  cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint to load (train: resume)");
  cmd->add_option("--precision", o.precision, "Arithmetic precision")->check(CLI::IsMember({"f32", "f64"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vitas stereo matching pipeline"};
  app.require_subcommand(1);
  vitas::CommonOptions opts;

  auto* train = app.add_subcommand("train", "Train on synthetic or on-disk stereo pairs");
  add_common(train, opts);

  std::optional<std::string> data_dir;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint (EPE, PEP, D1 as CSV)");
  add_common(eval, opts);
  eval->add_option("--data", data_dir, "gen-data directory to evaluate instead of the configured set");

  std::string left, right;
  auto* infer = app.add_subcommand("infer", "Predict disparity for one image pair");
  add_common(infer, opts);
  infer->add_option("left", left, "Left image (PNG or PGM)")->required();
  infer->add_option("right", right, "Right image (PNG or PGM)")->required();

  std::vector<std::int64_t> sizes;
  std::int64_t channels = 16;
  auto* bench = app.add_subcommand("bench", "Local vs dense attention scaling report");
  add_common(bench, opts);
  bench->add_option("--sizes", sizes, "Coarse position counts N (default 2^6..2^14)")->delimiter(',');
  bench->add_option("--channels", channels, "Channel count")->capture_default_str();

  std::int64_t count = 0;
  auto* gen = app.add_subcommand("gen-data", "Write random-dot stereograms and a manifest");
  add_common(gen, opts);
  gen->add_option("--count", count, "Number of samples")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? vitas::kExitOk : vitas::kExitUser;
  }

  try {
    if (*train) return vitas::cmd_train(opts, std::cout);
    if (*eval) return vitas::cmd_eval(opts, data_dir, std::cout);
    if (*infer) return vitas::cmd_infer(opts, left, right, std::cout);
    if (*bench) return vitas::cmd_bench(opts, sizes, channels, std::cout);
    if (*gen) return vitas::cmd_gen_data(opts, count, std::cout);
  } catch (const vitas::UserError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return vitas::kExitUser;
  } catch (const vitas::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return vitas::kExitUser;
  } catch (const vitas::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return vitas::kExitUser;
  } catch (const vitas::PfmError& e) {
    std::cerr << "pfm error: " << e.what() << '\n';
    return vitas::kExitUser;
  } catch (const vitas::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return vitas::kExitUser;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return vitas::kExitInternal;
  }
  return vitas::kExitInternal;
}
