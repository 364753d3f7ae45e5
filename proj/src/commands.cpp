#include "vitas/commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "vitas/bench.hpp"
#include "vitas/checkpoint.hpp"
#include "vitas/metrics.hpp"
#include "vitas/optimizer.hpp"
#include "vitas/pfm.hpp"

namespace fs = std::filesystem;

namespace vitas {

namespace {

std::ofstream open_output(const fs::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw UserError("cannot write " + path.string());
  return f;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UserError("cannot create output directory " + dir.string());
}

std::string checkpoint_path(const CommonOptions& opts) {
  return opts.checkpoint ? *opts.checkpoint : (fs::path(opts.out) / kCheckpointFile).string();
}

/// Config for a command that consumes a trained checkpoint.
RunConfig config_for_checkpoint(const CommonOptions& opts, const std::string& ckpt) {
  if (opts.config) return resolve_config(opts);
  const auto sibling = fs::path(ckpt).parent_path() / kRunConfigFile;
  if (!fs::exists(sibling)) throw UserError("no --config given and " + sibling.string() + " does not exist");
  CommonOptions o = opts;
  o.config = sibling.string();
  return resolve_config(o);
}

void write_metric_row(std::ostream& os, const std::string& id, const MetricReport& r) {
  os << id << ',' << r.valid_count << ',' << std::setprecision(6) << r.epe;
  for (double d : kDefaultDeltas) os << ',' << r.pep.at(d);
  os << ',' << r.d1 << '\n';
}

template <typename T>
struct CachedSample {
  Tensor<T> left, right;
  const StereoSample* sample;
};

template <typename M>
M flip_rows(const M& m, std::size_t row_elems) {
  M out = m;
  const auto rows = static_cast<std::size_t>(m.height);
  auto flip = [&](const auto& src, auto& dst) {
    for (std::size_t y = 0; y < rows; ++y)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(y * row_elems), row_elems,
                  dst.begin() + static_cast<std::ptrdiff_t>((rows - 1 - y) * row_elems));
  };
  if constexpr (std::is_same_v<M, Image>) {
    flip(m.data, out.data);
  } else {
    flip(m.values, out.values);
    flip(m.valid, out.valid);
  }
  return out;
}

/// Upside-down copy of a pair.
StereoSample flip_vertical(const StereoSample& s) {
  StereoSample f = s;
  const auto row = static_cast<std::size_t>(s.left.width * s.left.channels);
  f.left = flip_rows(s.left, row);
  f.right = flip_rows(s.right, row);
  f.gt = flip_rows(s.gt, static_cast<std::size_t>(s.gt.width));
  return f;
}

template <typename T>
std::vector<CachedSample<T>> cache(const std::vector<StereoSample>& samples) {
  std::vector<CachedSample<T>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({image_to_tensor<T>(s.left), image_to_tensor<T>(s.right), &s});
  return out;
}

template <typename T>
MetricReport evaluate(const StereoModel<T>& model, const std::vector<StereoSample>& samples) {
  MetricAccumulator acc;
  for (const auto& s : samples) acc.add(model.predict(s.left, s.right), s.gt);
  return acc.report();
}

std::vector<StereoSample> training_split(const RunConfig& cfg) {
  if (cfg.data.source == "directory") {
    if (cfg.data.train_dir.empty()) throw UserError("data.source = directory needs data.train_dir");
    return load_dataset(cfg.data.train_dir);
  }
  return synthetic_split(cfg.data, cfg.model.d_max, cfg.data.train_seed, cfg.data.train_samples);
}

std::vector<StereoSample> eval_split(const RunConfig& cfg) {
  if (cfg.data.source == "directory") {
    if (cfg.data.eval_dir.empty()) throw UserError("data.source = directory needs data.eval_dir");
    return load_dataset(cfg.data.eval_dir);
  }
  return synthetic_split(cfg.data, cfg.model.d_max, cfg.data.eval_seed, cfg.data.eval_samples);
}

template <typename T>
int train_impl(const RunConfig& cfg, const CommonOptions& opts, std::ostream& log) {
  const fs::path out(opts.out);
  ensure_dir(out);
  const auto train = training_split(cfg);
  if (train.empty()) throw UserError("training set is empty");
  const auto cached = cache<T>(train);
  std::vector<StereoSample> flipped;
  if (cfg.data.vflip)
    for (const auto& s : train) flipped.push_back(flip_vertical(s));
  const auto cached_flipped = cache<T>(flipped);

  StereoModel<T> model(cfg.model, cfg.run.seed);
  AdamW<T> optim({cfg.optim.lr, cfg.optim.beta1, cfg.optim.beta2, cfg.optim.eps, cfg.optim.weight_decay});
  if (opts.checkpoint) {
    const auto entries = load_checkpoint(*opts.checkpoint);
    load_into(model.params(), entries);
    optim.load_state(model.params(), entries);
  }
  save_config((out / kRunConfigFile).string(), cfg);
  const auto ckpt = (out / kCheckpointFile).string();
  const auto log_path = out / "train_log.csv";
  const bool append = opts.checkpoint && fs::exists(log_path);
  std::ofstream csv(log_path, append ? std::ios::app : std::ios::trunc);
  if (!csv) throw UserError("cannot write " + log_path.string());
  const std::string header = "step,lr,loss,epe,grad_norm,seconds";
  if (!append) csv << header << '\n';
  log << header << '\n';

  const auto batch = cfg.optim.batch_size;
  const auto total = cfg.optim.steps;
  const auto last = cfg.run.stop_after > 0 ? std::min(cfg.run.stop_after, total) : total;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::int64_t step = optim.steps_taken(); step < last; ++step) {
    const double lr = cosine_lr(step, total, cfg.optim.warmup_steps, cfg.optim.lr);
    model.params().zero_grad();
    double loss_sum = 0.0, abs_err = 0.0;
    std::int64_t valid = 0;
    for (std::int64_t b = 0; b < batch; ++b) {
      const auto pick = static_cast<std::size_t>(sample_index(cfg.run.seed, step, b, static_cast<std::int64_t>(cached.size())));
      const bool flip = cfg.data.vflip && sample_index(~cfg.run.seed, step, b, 2) == 1;
      const auto& s = flip ? cached_flipped[pick] : cached[pick];
      const auto pred = model.forward(s.left, s.right);
      const auto loss = ops::scale(disparity_loss(pred, s.sample->gt), static_cast<T>(1.0 / static_cast<double>(batch)));
      loss.backward();
      loss_sum += static_cast<double>(loss.item());
      const auto pv = pred.values();
      const auto& gt = s.sample->gt;
      for (std::size_t i = 0; i < pv.size(); ++i) {
        if (!gt.valid[i]) continue;
        abs_err += std::abs(static_cast<double>(pv[i]) - gt.values[i]);
        ++valid;
      }
    }
    if (!std::isfinite(loss_sum)) {
      log << "error: non-finite loss at step " << step << "; keeping last checkpoint " << ckpt << '\n';
      return kExitInternal;
    }
    const double gnorm = gradient_norm(model.params());
    if (cfg.optim.grad_clip > 0) clip_gradients(model.params(), cfg.optim.grad_clip);
    optim.step(model.params(), lr);
    const auto done = step + 1;
    if (done % cfg.run.log_interval == 0 || done == last) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::ostringstream row;
      row << done << ',' << std::setprecision(6) << lr << ',' << loss_sum << ','
          << (valid ? abs_err / static_cast<double>(valid) : 0.0) << ',' << gnorm << ',' << std::setprecision(4) << secs;
      csv << row.str() << '\n' << std::flush;
      log << row.str() << '\n' << std::flush;
    }
    if (done % cfg.run.checkpoint_interval == 0 || done == last) {
      auto entries = entries_from(model.params());
      auto state = optim.state_entries(model.params());
      entries.insert(entries.end(), state.begin(), state.end());
      save_checkpoint(ckpt, entries);
    }
  }
  return kExitOk;
}

template <typename T>
int eval_impl(const RunConfig& cfg, const std::string& ckpt, const std::vector<StereoSample>& samples,
              const CommonOptions& opts, std::ostream& os) {
  StereoModel<T> model(cfg.model, cfg.run.seed);
  load_into(model.params(), load_checkpoint(ckpt));
  ensure_dir(opts.out);
  auto csv = open_output(fs::path(opts.out) / "eval.csv");
  std::ostringstream table;
  table << "id,valid,epe,pep1,pep2,pep3,pep5,d1\n";
  MetricAccumulator pooled;
  for (const auto& s : samples) {
    try {
      const auto pred = model.predict(s.left, s.right);
      write_metric_row(table, s.id, compute_metrics(pred, s.gt));
      pooled.add(pred, s.gt);
    } catch (const std::invalid_argument& e) {
      table << s.id << ",error," << e.what() << '\n';
    }
  }
  if (pooled.valid_count() == 0) {
    csv << table.str();
    os << table.str();
    throw UserError("no sample could be evaluated");
  }
  write_metric_row(table, "pooled", pooled.report());
  csv << table.str();
  os << table.str();
  return kExitOk;
}

template <typename T>
int infer_impl(const RunConfig& cfg, const std::string& ckpt, const Image& left, const Image& right,
               const CommonOptions& opts, std::ostream& log) {
  StereoModel<T> model(cfg.model, cfg.run.seed);
  load_into(model.params(), load_checkpoint(ckpt));
  const auto disp = model.predict(left, right);
  ensure_dir(opts.out);
  const auto pfm = (fs::path(opts.out) / "disparity.pfm").string();
  const auto png = (fs::path(opts.out) / "disparity.png").string();
  write_pfm(pfm, disp);
  write_png(png, colorize(disp, static_cast<float>(cfg.model.d_max)));
  log << "wrote " << pfm << " and " << png << " (" << disp.width << "x" << disp.height << ")\n";
  return kExitOk;
}

std::string rds_row(const ManifestRow& r) {
  const auto& o = r.options;
  std::ostringstream os;
  os << r.id << ',' << o.seed << ',' << o.width << ',' << o.height << ',' << o.d_max << ','
     << std::setprecision(17) << o.density << ',' << o.dot_size << ',' << (o.binary ? 1 : 0);
  return os.str();
}

constexpr const char* kManifestHeader = "id,seed,width,height,d_max,density,dot_size,binary";

}  // namespace

RunConfig resolve_config(const CommonOptions& opts) {
  RunConfig cfg = opts.config ? load_config(*opts.config) : parse_config("");
  if (opts.seed) cfg.run.seed = *opts.seed;
  if (opts.precision) cfg.run.precision = *opts.precision;
  cfg.validate();
  return cfg;
}

std::int64_t sample_index(std::uint64_t seed, std::int64_t step, std::int64_t slot, std::int64_t count) {
  // splitmix64 finalizer over the combined key
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(step) * 0xBF58476D1CE4E5B9ull +
                    static_cast<std::uint64_t>(slot) + 0x94D049BB133111EBull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  z ^= z >> 31;
  return static_cast<std::int64_t>(z % static_cast<std::uint64_t>(count));
}

std::vector<StereoSample> synthetic_split(const DataConfig& data, int d_max, std::uint64_t base_seed,
                                          std::int64_t count) {
  std::vector<StereoSample> out;
  out.reserve(static_cast<std::size_t>(std::max<std::int64_t>(0, count)));
  for (std::int64_t i = 0; i < count; ++i) {
    RdsOptions o;
    o.width = data.width;
    o.height = data.height;
    o.d_max = d_max;
    o.density = data.density;
    o.dot_size = data.dot_size;
    o.binary = data.binary;
    o.seed = base_seed + static_cast<std::uint64_t>(i);
    out.push_back(gen_rds(o));
  }
  return out;
}

std::vector<ManifestRow> read_manifest(const std::string& dir) {
  const auto path = fs::path(dir) / kManifestFile;
  std::ifstream in(path);
  if (!in) throw UserError("cannot open manifest " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kManifestHeader) throw UserError(path.string() + ": unexpected manifest header");
  std::vector<ManifestRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() != 8) throw UserError(path.string() + ":" + std::to_string(lineno) + ": expected 8 fields");
    ManifestRow r;
    try {
      r.id = f[0];
      r.options.seed = std::stoull(f[1]);
      r.options.width = std::stoll(f[2]);
      r.options.height = std::stoll(f[3]);
      r.options.d_max = std::stoi(f[4]);
      r.options.density = std::stod(f[5]);
      r.options.dot_size = std::stoi(f[6]);
      r.options.binary = f[7] == "1";
    } catch (const std::exception&) {
      throw UserError(path.string() + ":" + std::to_string(lineno) + ": malformed field");
    }
    rows.push_back(r);
  }
  return rows;
}

std::vector<StereoSample> load_dataset(const std::string& dir) {
  std::vector<StereoSample> out;
  for (const auto& row : read_manifest(dir)) {
    StereoSample s;
    s.id = row.id;
    const fs::path base(dir);
    s.left = read_image((base / (row.id + "_left.png")).string());
    s.right = read_image((base / (row.id + "_right.png")).string());
    s.gt = read_pfm((base / (row.id + "_gt.pfm")).string());
    out.push_back(std::move(s));
  }
  return out;
}

int cmd_train(const CommonOptions& opts, std::ostream& log) {
  const auto cfg = resolve_config(opts);
  return cfg.run.precision == "f64" ? train_impl<double>(cfg, opts, log) : train_impl<float>(cfg, opts, log);
}

int cmd_eval(const CommonOptions& opts, const std::optional<std::string>& data_dir, std::ostream& out) {
  const auto ckpt = checkpoint_path(opts);
  if (!fs::exists(ckpt)) throw UserError("checkpoint " + ckpt + " does not exist");
  const auto cfg = config_for_checkpoint(opts, ckpt);
  const auto samples = data_dir ? load_dataset(*data_dir) : eval_split(cfg);
  if (samples.empty()) throw UserError("evaluation set is empty");
  return cfg.run.precision == "f64" ? eval_impl<double>(cfg, ckpt, samples, opts, out)
                                    : eval_impl<float>(cfg, ckpt, samples, opts, out);
}

int cmd_infer(const CommonOptions& opts, const std::string& left, const std::string& right, std::ostream& log) {
  const auto ckpt = checkpoint_path(opts);
  if (!fs::exists(ckpt)) throw UserError("checkpoint " + ckpt + " does not exist");
  const auto cfg = config_for_checkpoint(opts, ckpt);
  Image l, r;
  try {
    l = read_image(left);
    r = read_image(right);
  } catch (const IoError& e) {
    throw UserError(e.what());
  }
  if (l.width != r.width || l.height != r.height) {
    throw UserError("left image is " + std::to_string(l.width) + "x" + std::to_string(l.height) + " but right is " +
                    std::to_string(r.width) + "x" + std::to_string(r.height));
  }
  return cfg.run.precision == "f64" ? infer_impl<double>(cfg, ckpt, l, r, opts, log)
                                    : infer_impl<float>(cfg, ckpt, l, r, opts, log);
}

int cmd_bench(const CommonOptions& opts, const std::vector<std::int64_t>& sizes, std::int64_t channels,
              std::ostream& out) {
  BenchOptions o;
  o.sizes = sizes.empty() ? power_of_two_sizes(6, 14) : sizes;
  o.channels = channels;
  o.seed = opts.seed.value_or(0);
  if (o.sizes.size() < 2) throw UserError("bench needs at least two sizes");
  const auto report = run_attention_bench(o);
  ensure_dir(opts.out);
  auto csv = open_output(fs::path(opts.out) / "bench.csv");
  write_bench_csv(csv, report);
  write_bench_csv(out, report);
  return kExitOk;
}

int cmd_gen_data(const CommonOptions& opts, std::int64_t count, std::ostream& log) {
  if (count < 0) throw UserError("--count must be >= 0");
  const auto cfg = resolve_config(opts);
  const fs::path out(opts.out);
  ensure_dir(out);
  auto manifest = open_output(out / kManifestFile);
  manifest << kManifestHeader << '\n';
  const auto base_seed = opts.seed.value_or(cfg.data.train_seed);
  for (std::int64_t i = 0; i < count; ++i) {
    ManifestRow row;
    row.options.width = cfg.data.width;
    row.options.height = cfg.data.height;
    row.options.d_max = cfg.model.d_max;
    row.options.density = cfg.data.density;
    row.options.dot_size = cfg.data.dot_size;
    row.options.binary = cfg.data.binary;
    row.options.seed = base_seed + static_cast<std::uint64_t>(i);
    std::ostringstream id;
    id << "rds_" << std::setw(5) << std::setfill('0') << i;
    row.id = id.str();
    const auto s = gen_rds(row.options);
    try {
      write_png((out / (row.id + "_left.png")).string(), s.left);
      write_png((out / (row.id + "_right.png")).string(), s.right);
      write_pfm((out / (row.id + "_gt.pfm")).string(), s.gt);
    } catch (const IoError& e) {
      throw UserError(e.what());
    }
    manifest << rds_row(row) << '\n';
  }
  if (!manifest) throw UserError("write failed: " + (out / kManifestFile).string());
  log << "wrote " << count << " samples to " << out.string() << '\n';
  return kExitOk;
}

}  // namespace vitas
