#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "vitas/checkpoint.hpp"
#include "vitas/commands.hpp"
#include "vitas/config.hpp"
#include "vitas/metrics.hpp"
#include "vitas/optimizer.hpp"
#include "vitas/pfm.hpp"

using namespace vitas;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("vitas_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string line; std::getline(ss, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

constexpr const char* kTinyConfig = R"(
[model]
num_blocks = 4
token_channels = 16
num_heads = 2
unfrozen_tail = 4
pyramid_channels = 16,16,8,8
norm_groups = 2
cam_blocks = 1
cam_heads = 2
d_max = 12
[optim]
lr = 1e-3
steps = 1
warmup_steps = 0
batch_size = 1
[data]
train_samples = 3
eval_samples = 2
width = 64
height = 32
[run]
log_interval = 1
checkpoint_interval = 1
)";

fs::path write_tiny_config(const fs::path& dir, std::int64_t steps, std::int64_t stop_after = 0) {
  auto cfg = parse_config(kTinyConfig);
  cfg.optim.steps = steps;
  cfg.run.stop_after = stop_after;
  const auto path = dir / "tiny.cfg";
  save_config(path.string(), cfg);
  return path;
}

CommonOptions tiny_options(const fs::path& dir, std::int64_t steps, const std::string& out,
                           std::int64_t stop_after = 0) {
  CommonOptions o;
  o.config = write_tiny_config(dir, steps, stop_after).string();
  o.out = (dir / out).string();
  return o;
}

std::vector<CheckpointEntry> params_only(std::vector<CheckpointEntry> entries) {
  std::erase_if(entries, [](const CheckpointEntry& e) { return e.name.rfind("optim.", 0) == 0; });
  return entries;
}

}  // namespace

TEST_CASE("checkpoint encode/decode is bitwise faithful") {
  Rng rng(1);
  ParameterSet<float> ps;
  ps.add("a.weight", vitas::testing::random_tensor<float>({3, 4}, rng));
  ps.add("b", vitas::testing::random_tensor<float>({2, 1, 5}, rng));
  ps.add("scalar", Tensor<float>::scalar(-0.0f));
  auto entries = entries_from(ps);
  auto back = decode_checkpoint(encode_checkpoint(entries));
  CHECK(back == entries);

  ParameterSet<float> other;
  other.add("a.weight", Tensor<float>({3, 4}));
  other.add("b", Tensor<float>({2, 1, 5}));
  other.add("scalar", Tensor<float>::scalar(1.0f));
  load_into(other, back);
  for (std::size_t i = 0; i < ps.size(); ++i) CHECK(vitas::testing::bit_equal(ps.all()[i].value(), other.all()[i].value()));
  CHECK(std::signbit(other.find("scalar")->value().item()));
}

TEST_CASE("checkpoint layout starts with magic, version and count") {
  std::vector<CheckpointEntry> entries{{"w", {2}, {1.0f, 2.0f}}};
  auto bytes = encode_checkpoint(entries);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "VTAS");
  CHECK(bytes[4] == kCheckpointVersion);
  CHECK(bytes[8] == 1);
  // magic 4 + version 4 + count 8 + name len 4 + name 1 + rank 1 + dim 8 + payload 8 + crc 4
  CHECK(bytes.size() == 42);
}

TEST_CASE("checkpoint corruption is detected by the CRC") {
  std::vector<CheckpointEntry> entries{{"w", {3}, {1.0f, 2.0f, 3.0f}}};
  auto bytes = encode_checkpoint(entries);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    auto bad = bytes;
    bad[i] ^= 0x10;
    CHECK_THROWS_AS(decode_checkpoint(bad), CheckpointError);
  }
  bytes.pop_back();
  CHECK_THROWS_AS(decode_checkpoint(bytes), CheckpointError);
}

TEST_CASE("load_into requires every parameter with matching dims") {
  ParameterSet<float> ps;
  ps.add("w", Tensor<float>({2}));
  CHECK_THROWS_AS(load_into(ps, {{"w", {3}, {1, 2, 3}}}), CheckpointError);
  CHECK_THROWS_AS(load_into(ps, {{"v", {2}, {1, 2}}}), CheckpointError);
  load_into(ps, {{"w", {2}, {1, 2}}, {"extra", {1}, {0}}});
  CHECK(ps.find("w")->value().at({1}) == 2.0f);
}

TEST_CASE("checkpoint file save is atomic and loads back") {
  auto dir = scratch_dir("ckpt");
  std::vector<CheckpointEntry> entries{{"w", {2, 2}, {1, 2, 3, 4}}};
  save_checkpoint((dir / "c.vtas").string(), entries);
  CHECK(load_checkpoint((dir / "c.vtas").string()) == entries);
  CHECK_FALSE(fs::exists(dir / "c.vtas.tmp"));
  CHECK_THROWS_AS(load_checkpoint((dir / "none.vtas").string()), CheckpointError);
}

TEST_CASE("config print/parse is a fixpoint on defaults and edits") {
  auto cfg = parse_config("");
  const auto text = print_config(cfg);
  CHECK(print_config(parse_config(text)) == text);
  auto tiny = parse_config(kTinyConfig);
  CHECK(tiny.model.adapter.sdm.channels == std::array<std::int64_t, 4>{16, 16, 8, 8});
  CHECK(tiny.model.adapter.sdm.token_channels == 16);
  CHECK(print_config(parse_config(print_config(tiny))) == print_config(tiny));
}

TEST_CASE("config rejects unknown keys, unknown sections and bad values") {
  CHECK_THROWS_AS(parse_config("[model]\nnot_a_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[extras]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[optim]\nlr = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("lr = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[model]\npyramid_channels = 1,2,3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[run]\nprecision = f16\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[data]\nwidth = 100\n"), ConfigError);
  CHECK_NOTHROW(parse_config("# comment\n[optim]\nlr = 0.01  # trailing\n"));
}

TEST_CASE("cosine schedule: warmup ramp, peak, and decay to zero") {
  CHECK(cosine_lr(0, 100, 10, 1.0) == doctest::Approx(0.1 * 0.5 * (1 + std::cos(0.0))));
  CHECK(cosine_lr(9, 100, 10, 1.0) == doctest::Approx(0.5 * (1 + std::cos(std::acos(-1.0) * 0.09))));
  CHECK(cosine_lr(50, 100, 0, 2.0) == doctest::Approx(1.0));
  CHECK(cosine_lr(100, 100, 0, 2.0) == doctest::Approx(0.0));
}

TEST_CASE("adamw first step moves each weight by lr against the gradient sign") {
  ParameterSet<double> ps;
  auto& w = ps.add("w", Tensor<double>({1, 3}, std::vector<double>{1.0, -2.0, 0.5}));
  auto& b = ps.add("b", Tensor<double>({2}, std::vector<double>{1.0, 1.0}));
  auto loss = ops::add(ops::sum_all(ops::mul(w.value(), Tensor<double>({1, 3}, std::vector<double>{3.0, -1.0, 0.0}))),
                       ops::sum_all(ops::scale(b.value(), 5.0)));
  loss.backward();
  AdamW<double> opt({0.1, 0.9, 0.999, 1e-8, 0.5});
  opt.step(ps, 0.1);
  // Decoupled decay on the rank-2 weight only: w -= lr * wd * w.
  CHECK(w.value().at({0, 0}) == doctest::Approx(1.0 - 0.05 - 0.1).epsilon(1e-6));
  CHECK(w.value().at({0, 1}) == doctest::Approx(-2.0 + 0.1 + 0.1).epsilon(1e-6));
  CHECK(w.value().at({0, 2}) == doctest::Approx(0.5 - 0.025).epsilon(1e-6));
  CHECK(b.value().at({0}) == doctest::Approx(1.0 - 0.1).epsilon(1e-6));
  CHECK(opt.steps_taken() == 1);
}

TEST_CASE("adamw skips frozen parameters and round-trips its state") {
  ParameterSet<float> ps;
  auto& a = ps.add("a", Tensor<float>({2, 2}, 1.0f));
  auto& f = ps.add("f", Tensor<float>({2}, 1.0f));
  f.set_frozen(true);
  ops::sum_all(ops::add(ops::sum(a.value(), 0, false), f.value())).backward();
  AdamW<float> opt({0.01, 0.9, 0.999, 1e-8, 0.0});
  opt.step(ps, 0.01);
  CHECK(f.value().at({0}) == 1.0f);
  CHECK(a.value().at({0, 0}) < 1.0f);
  auto state = opt.state_entries(ps);
  AdamW<float> restored({0.01, 0.9, 0.999, 1e-8, 0.0});
  restored.load_state(ps, state);
  CHECK(restored.steps_taken() == 1);
  CHECK(restored.state_entries(ps) == state);
}

TEST_CASE("gradient clipping bounds the global norm") {
  ParameterSet<double> ps;
  auto& a = ps.add("a", Tensor<double>({2}, std::vector<double>{0.0, 0.0}));
  ops::sum_all(ops::mul(a.value(), Tensor<double>({2}, std::vector<double>{3.0, 4.0}))).backward();
  CHECK(gradient_norm(ps) == doctest::Approx(5.0));
  clip_gradients(ps, 1.0);
  CHECK(gradient_norm(ps) == doctest::Approx(1.0));
}

TEST_CASE("sample_index is stateless and in range") {
  for (std::int64_t step = 0; step < 50; ++step)
    for (std::int64_t slot = 0; slot < 4; ++slot) {
      const auto i = sample_index(7, step, slot, 13);
      CHECK(i >= 0);
      CHECK(i < 13);
      CHECK(i == sample_index(7, step, slot, 13));
    }
  CHECK(sample_index(7, 3, 0, 1000) != sample_index(8, 3, 0, 1000));
}

TEST_CASE("a 1-step run writes one checkpoint and one CSV row") {
  auto dir = scratch_dir("train1");
  auto opts = tiny_options(dir, 1, "out");
  std::ostringstream log;
  CHECK(cmd_train(opts, log) == kExitOk);
  const fs::path out(opts.out);
  CHECK(fs::exists(out / kCheckpointFile));
  CHECK(fs::exists(out / kRunConfigFile));
  auto rows = lines_of(slurp(out / "train_log.csv"));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == "step,lr,loss,epe,grad_norm,seconds");
  CHECK(rows[1].rfind("1,", 0) == 0);
  std::size_t checkpoints = 0;
  for (const auto& e : fs::directory_iterator(out)) checkpoints += e.path().extension() == ".vtas";
  CHECK(checkpoints == 1);
}

TEST_CASE("training is deterministic and a resumed run matches an uninterrupted one") {
  auto dir = scratch_dir("resume");
  std::ostringstream log;
  auto full = tiny_options(dir, 3, "full");
  REQUIRE(cmd_train(full, log) == kExitOk);
  auto again = tiny_options(dir, 3, "again");
  REQUIRE(cmd_train(again, log) == kExitOk);
  const auto full_ckpt = load_checkpoint((fs::path(full.out) / kCheckpointFile).string());
  CHECK(load_checkpoint((fs::path(again.out) / kCheckpointFile).string()) == full_ckpt);

  auto first = tiny_options(dir, 3, "part", 2);
  REQUIRE(cmd_train(first, log) == kExitOk);
  auto second = tiny_options(dir, 3, "part");
  second.checkpoint = (fs::path(first.out) / kCheckpointFile).string();
  REQUIRE(cmd_train(second, log) == kExitOk);
  const auto resumed = load_checkpoint((fs::path(second.out) / kCheckpointFile).string());
  CHECK(params_only(resumed) == params_only(full_ckpt));
  CHECK(resumed == full_ckpt);
  CHECK(lines_of(slurp(fs::path(second.out) / "train_log.csv")).size() == 4);
}

TEST_CASE("eval writes per-sample rows plus a pooled row that matches direct pooling") {
  auto dir = scratch_dir("eval");
  std::ostringstream log;
  auto opts = tiny_options(dir, 1, "out");
  REQUIRE(cmd_train(opts, log) == kExitOk);
  CommonOptions eval_opts;
  eval_opts.out = opts.out;
  std::ostringstream table;
  REQUIRE(cmd_eval(eval_opts, std::nullopt, table) == kExitOk);
  auto rows = lines_of(table.str());
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == "id,valid,epe,pep1,pep2,pep3,pep5,d1");
  CHECK(rows[3].rfind("pooled,", 0) == 0);
  CHECK(slurp(fs::path(opts.out) / "eval.csv") == table.str());

  // Oracle: rebuild the model, predict, and pool by hand.
  const auto cfg = load_config((fs::path(opts.out) / kRunConfigFile).string());
  StereoModel<float> model(cfg.model, cfg.run.seed);
  load_into(model.params(), load_checkpoint((fs::path(opts.out) / kCheckpointFile).string()));
  double abs_sum = 0;
  std::int64_t n = 0;
  for (const auto& s : synthetic_split(cfg.data, cfg.model.d_max, cfg.data.eval_seed, cfg.data.eval_samples)) {
    const auto pred = model.predict(s.left, s.right);
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
      if (!s.gt.valid[i]) continue;
      abs_sum += std::abs(static_cast<double>(pred.values[i]) - s.gt.values[i]);
      ++n;
    }
  }
  std::stringstream ss(rows[3]);
  std::string id, valid, epe;
  std::getline(ss, id, ',');
  std::getline(ss, valid, ',');
  std::getline(ss, epe, ',');
  CHECK(std::stoll(valid) == n);
  CHECK(std::stod(epe) == doctest::Approx(abs_sum / static_cast<double>(n)).epsilon(1e-5));
}

TEST_CASE("eval reports a per-sample error and continues") {
  auto dir = scratch_dir("eval_err");
  std::ostringstream log;
  auto opts = tiny_options(dir, 1, "out");
  REQUIRE(cmd_train(opts, log) == kExitOk);
  CommonOptions gen = opts;
  gen.out = (dir / "data").string();
  REQUIRE(cmd_gen_data(gen, 2, log) == kExitOk);
  // Replace one ground truth with a map of the wrong size.
  write_pfm((dir / "data" / "rds_00001_gt.pfm").string(), DisparityMap(4, 4, 1.0f));
  CommonOptions eval_opts;
  eval_opts.out = opts.out;
  std::ostringstream table;
  REQUIRE(cmd_eval(eval_opts, (dir / "data").string(), table) == kExitOk);
  auto rows = lines_of(table.str());
  REQUIRE(rows.size() == 4);
  CHECK(rows[2].rfind("rds_00001,error,", 0) == 0);
  CHECK(rows[3].rfind("pooled,", 0) == 0);
}

TEST_CASE("gen-data: empty set, determinism, warp identity and manifest regeneration") {
  auto dir = scratch_dir("gen");
  std::ostringstream log;
  CommonOptions o;
  o.out = (dir / "empty").string();
  REQUIRE(cmd_gen_data(o, 0, log) == kExitOk);
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(o.out)) ++files;
  CHECK(files == 1);
  CHECK(read_manifest(o.out).empty());

  o.seed = 77;
  o.out = (dir / "a").string();
  REQUIRE(cmd_gen_data(o, 3, log) == kExitOk);
  o.out = (dir / "b").string();
  REQUIRE(cmd_gen_data(o, 3, log) == kExitOk);
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    CHECK(slurp(e.path()) == slurp(dir / "b" / e.path().filename()));
  }
  const auto samples = load_dataset((dir / "a").string());
  const auto rows = read_manifest((dir / "a").string());
  REQUIRE(samples.size() == 3);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(warp_identity_holds(samples[i]));
    const auto regen = gen_rds(rows[i].options);
    CHECK(regen.left == samples[i].left);
    CHECK(regen.right == samples[i].right);
    CHECK(regen.gt.valid == samples[i].gt.valid);
    for (std::size_t k = 0; k < regen.gt.values.size(); ++k)
      if (regen.gt.valid[k]) CHECK(regen.gt.values[k] == samples[i].gt.values[k]);
  }
  CHECK_THROWS_AS(cmd_gen_data(o, -1, log), UserError);
}

TEST_CASE("infer keeps input dims, is repeatable, and rejects mismatched images") {
  auto dir = scratch_dir("infer");
  std::ostringstream log;
  auto opts = tiny_options(dir, 1, "out");
  REQUIRE(cmd_train(opts, log) == kExitOk);
  RdsOptions r;
  r.width = 70;
  r.height = 37;
  r.d_max = 12;
  r.seed = 3;
  const auto s = gen_rds(r);
  write_png((dir / "l.png").string(), s.left);
  write_png((dir / "r.png").string(), s.right);
  CommonOptions io;
  io.checkpoint = (fs::path(opts.out) / kCheckpointFile).string();
  io.out = (dir / "pred1").string();
  REQUIRE(cmd_infer(io, (dir / "l.png").string(), (dir / "r.png").string(), log) == kExitOk);
  const auto d1 = read_pfm((dir / "pred1" / "disparity.pfm").string());
  CHECK(d1.width == 70);
  CHECK(d1.height == 37);
  CHECK(read_png((dir / "pred1" / "disparity.png").string()).width == 70);
  io.out = (dir / "pred2").string();
  REQUIRE(cmd_infer(io, (dir / "l.png").string(), (dir / "r.png").string(), log) == kExitOk);
  CHECK(slurp(dir / "pred1" / "disparity.pfm") == slurp(dir / "pred2" / "disparity.pfm"));

  write_png((dir / "small.png").string(), Image(10, 10, 1));
  CHECK_THROWS_AS(cmd_infer(io, (dir / "l.png").string(), (dir / "small.png").string(), log), UserError);
  CHECK_THROWS_AS(cmd_infer(io, (dir / "l.png").string(), (dir / "nope.png").string(), log), UserError);
}

TEST_CASE("bench reports exact analytic slopes") {
  auto dir = scratch_dir("bench");
  CommonOptions o;
  o.out = dir.string();
  std::ostringstream csv;
  REQUIRE(cmd_bench(o, {64, 128, 256}, 8, csv) == kExitOk);
  CHECK(fs::exists(dir / "bench.csv"));
  CHECK(csv.str().find("# slope,analytic_local,1\n") != std::string::npos);
  CHECK(csv.str().find("# slope,analytic_dense,2\n") != std::string::npos);
  CHECK_THROWS_AS(cmd_bench(o, {64}, 8, csv), UserError);
}

TEST_CASE("vertical-flip augmentation trains deterministically and changes the trajectory") {
  auto dir = scratch_dir("vflip");
  std::ostringstream log;
  auto plain = parse_config(kTinyConfig);
  plain.optim.steps = 4;
  save_config((dir / "plain.cfg").string(), plain);
  auto flipped = plain;
  flipped.data.vflip = true;
  save_config((dir / "flip.cfg").string(), flipped);
  auto run = [&](const std::string& cfg, const std::string& out) {
    CommonOptions o;
    o.config = (dir / cfg).string();
    o.out = (dir / out).string();
    REQUIRE(cmd_train(o, log) == kExitOk);
    return load_checkpoint((dir / out / kCheckpointFile).string());
  };
  const auto a = run("flip.cfg", "a"), b = run("flip.cfg", "b"), c = run("plain.cfg", "c");
  CHECK(a == b);
  CHECK_FALSE(params_only(a) == params_only(c));
}
