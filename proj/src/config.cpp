#include "vitas/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>
#include <vector>

namespace vitas {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

template <typename I>
I parse_int(const std::string& s) {
  I v{};
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw ConfigError("expected an integer, got '" + s + "'");
  return v;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

struct Field {
  std::string section, key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename M>
Field int_field(std::string sec, std::string key, M member) {
  using V = std::remove_reference_t<decltype(member(std::declval<RunConfig&>()))>;
  return {sec, key, [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, const std::string& v) { member(c) = parse_int<V>(v); }};
}

template <typename M>
Field double_field(std::string sec, std::string key, M member) {
  return {sec, key, [member](const RunConfig& c) { return fmt_double(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, const std::string& v) { member(c) = parse_double(v); }};
}

template <typename M>
Field bool_field(std::string sec, std::string key, M member) {
  return {sec, key, [member](const RunConfig& c) { return std::string(member(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [member](RunConfig& c, const std::string& v) { member(c) = parse_bool(v); }};
}

template <typename M>
Field string_field(std::string sec, std::string key, M member) {
  return {sec, key, [member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)); },
          [member](RunConfig& c, const std::string& v) { member(c) = v; }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(int_field("model", "patch_size", [](RunConfig& c) -> int& { return c.model.backbone.patch_size; }));
    f.push_back(int_field("model", "num_blocks", [](RunConfig& c) -> int& { return c.model.backbone.num_blocks; }));
    f.push_back(int_field("model", "token_channels", [](RunConfig& c) -> std::int64_t& { return c.model.backbone.token_channels; }));
    f.push_back(int_field("model", "num_heads", [](RunConfig& c) -> int& { return c.model.backbone.num_heads; }));
    f.push_back(int_field("model", "unfrozen_tail", [](RunConfig& c) -> int& { return c.model.backbone.unfrozen_tail; }));
    f.push_back(int_field("model", "mlp_ratio", [](RunConfig& c) -> int& { return c.model.backbone.mlp_ratio; }));
    f.push_back(int_field("model", "pos_grid_h", [](RunConfig& c) -> std::int64_t& { return c.model.backbone.base_grid_h; }));
    f.push_back(int_field("model", "pos_grid_w", [](RunConfig& c) -> std::int64_t& { return c.model.backbone.base_grid_w; }));
    f.push_back({"model", "pyramid_channels",
                 [](const RunConfig& c) {
                   const auto& ch = c.model.adapter.sdm.channels;
                   return std::to_string(ch[0]) + "," + std::to_string(ch[1]) + "," + std::to_string(ch[2]) + "," +
                          std::to_string(ch[3]);
                 },
                 [](RunConfig& c, const std::string& v) {
                   std::array<std::int64_t, 4> ch{};
                   std::stringstream ss(v);
                   std::string item;
                   std::size_t n = 0;
                   while (std::getline(ss, item, ',')) {
                     if (n == 4) throw ConfigError("pyramid_channels needs exactly 4 values");
                     ch[n++] = parse_int<std::int64_t>(trim(item));
                   }
                   if (n != 4) throw ConfigError("pyramid_channels needs exactly 4 values");
                   c.model.adapter.sdm.channels = ch;
                 }});
    f.push_back(int_field("model", "norm_groups", [](RunConfig& c) -> int& { return c.model.adapter.sdm.norm_groups; }));
    f.push_back(int_field("model", "cam_blocks", [](RunConfig& c) -> int& { return c.model.adapter.cam_blocks; }));
    f.push_back(int_field("model", "cam_heads", [](RunConfig& c) -> int& { return c.model.adapter.cam_heads; }));
    f.push_back(int_field("model", "cam_mlp_ratio", [](RunConfig& c) -> int& { return c.model.adapter.mlp_ratio; }));
    f.push_back(int_field("model", "d_max", [](RunConfig& c) -> int& { return c.model.d_max; }));

    f.push_back(double_field("optim", "lr", [](RunConfig& c) -> double& { return c.optim.lr; }));
    f.push_back(double_field("optim", "weight_decay", [](RunConfig& c) -> double& { return c.optim.weight_decay; }));
    f.push_back(double_field("optim", "beta1", [](RunConfig& c) -> double& { return c.optim.beta1; }));
    f.push_back(double_field("optim", "beta2", [](RunConfig& c) -> double& { return c.optim.beta2; }));
    f.push_back(double_field("optim", "eps", [](RunConfig& c) -> double& { return c.optim.eps; }));
    f.push_back(double_field("optim", "grad_clip", [](RunConfig& c) -> double& { return c.optim.grad_clip; }));
    f.push_back(int_field("optim", "steps", [](RunConfig& c) -> std::int64_t& { return c.optim.steps; }));
    f.push_back(int_field("optim", "warmup_steps", [](RunConfig& c) -> std::int64_t& { return c.optim.warmup_steps; }));
    f.push_back(int_field("optim", "batch_size", [](RunConfig& c) -> std::int64_t& { return c.optim.batch_size; }));

    f.push_back(string_field("data", "source", [](RunConfig& c) -> std::string& { return c.data.source; }));
    f.push_back(string_field("data", "train_dir", [](RunConfig& c) -> std::string& { return c.data.train_dir; }));
    f.push_back(string_field("data", "eval_dir", [](RunConfig& c) -> std::string& { return c.data.eval_dir; }));
    f.push_back(int_field("data", "train_samples", [](RunConfig& c) -> std::int64_t& { return c.data.train_samples; }));
    f.push_back(int_field("data", "eval_samples", [](RunConfig& c) -> std::int64_t& { return c.data.eval_samples; }));
    f.push_back(int_field("data", "width", [](RunConfig& c) -> std::int64_t& { return c.data.width; }));
    f.push_back(int_field("data", "height", [](RunConfig& c) -> std::int64_t& { return c.data.height; }));
    f.push_back(double_field("data", "density", [](RunConfig& c) -> double& { return c.data.density; }));
    f.push_back(int_field("data", "dot_size", [](RunConfig& c) -> int& { return c.data.dot_size; }));
    f.push_back(bool_field("data", "binary", [](RunConfig& c) -> bool& { return c.data.binary; }));
    f.push_back(bool_field("data", "vflip", [](RunConfig& c) -> bool& { return c.data.vflip; }));
    f.push_back(int_field("data", "train_seed", [](RunConfig& c) -> std::uint64_t& { return c.data.train_seed; }));
    f.push_back(int_field("data", "eval_seed", [](RunConfig& c) -> std::uint64_t& { return c.data.eval_seed; }));

    f.push_back(int_field("run", "seed", [](RunConfig& c) -> std::uint64_t& { return c.run.seed; }));
    f.push_back(string_field("run", "precision", [](RunConfig& c) -> std::string& { return c.run.precision; }));
    f.push_back(int_field("run", "log_interval", [](RunConfig& c) -> std::int64_t& { return c.run.log_interval; }));
    f.push_back(int_field("run", "checkpoint_interval", [](RunConfig& c) -> std::int64_t& { return c.run.checkpoint_interval; }));
    f.push_back(int_field("run", "stop_after", [](RunConfig& c) -> std::int64_t& { return c.run.stop_after; }));
    return f;
  }();
  return table;
}

}  // namespace

void RunConfig::validate() const {
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (model.adapter.sdm.token_channels != model.backbone.token_channels) {
    throw ConfigError("config: adapter token channels must match the backbone");
  }
  if (optim.lr <= 0 || optim.steps < 0 || optim.batch_size < 1 || optim.warmup_steps < 0) {
    throw ConfigError("config: optim.lr must be positive, steps >= 0, batch_size >= 1, warmup_steps >= 0");
  }
  if (optim.beta1 < 0 || optim.beta1 >= 1 || optim.beta2 < 0 || optim.beta2 >= 1 || optim.eps <= 0) {
    throw ConfigError("config: invalid Adam coefficients");
  }
  if (data.source != "synthetic" && data.source != "directory") {
    throw ConfigError("config: data.source must be synthetic or directory");
  }
  if (data.width % kInputAlignment != 0 || data.height % kInputAlignment != 0) {
    throw ConfigError("config: data.width and data.height must be multiples of 32");
  }
  if (run.precision != "f32" && run.precision != "f64") throw ConfigError("config: run.precision must be f32 or f64");
  if (run.log_interval < 1 || run.checkpoint_interval < 1) throw ConfigError("config: intervals must be >= 1");
  if (run.stop_after < 0) throw ConfigError("config: stop_after must be >= 0");
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  c.model.adapter.sdm.token_channels = c.model.backbone.token_channels;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = "line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "optim" && section != "data" && section != "run") {
        throw ConfigError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of a section");
    const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    bool found = false;
    for (const auto& f : fields()) {
      if (f.section == section && f.key == key) {
        try {
          f.set(c, value);
        } catch (const ConfigError& e) {
          throw ConfigError(where + section + "." + key + ": " + e.what());
        }
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError(where + "unknown key " + section + "." + key);
  }
  c.model.adapter.sdm.token_channels = c.model.backbone.token_channels;
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string print_config(const RunConfig& config) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) os << '\n';
      section = f.section;
      os << '[' << section << "]\n";
    }
    os << f.key << " = " << f.get(config) << '\n';
  }
  return os.str();
}

void save_config(const std::string& path, const RunConfig& config) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write config " + path);
  out << print_config(config);
  if (!out) throw ConfigError("write failed: " + path);
}

}  // namespace vitas
