#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "vitas/checkpoint.hpp"
#include "vitas/commands.hpp"
#include "vitas/config.hpp"
#include "vitas/metrics.hpp"
#include "vitas/pafm.hpp"
#include "vitas/pfm.hpp"
#include "vitas/rds.hpp"
#include "vitas/stereo_model.hpp"

namespace py = pybind11;
using namespace vitas;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;
using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Tensor<float> to_tensor(const F32Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<float>(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

F32Array to_array(const Tensor<float>& t) {
  const auto v = t.values();
  F32Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Image to_image(const U8Array& a) {
  if (a.ndim() != 2 && !(a.ndim() == 3 && (a.shape(2) == 1 || a.shape(2) == 3)))
    throw std::invalid_argument("image must be [h, w] or [h, w, 1|3] uint8");
  Image img(a.shape(1), a.shape(0), a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1);
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  return img;
}

U8Array from_image(const Image& img) {
  std::vector<py::ssize_t> shape{img.height, img.width};
  if (img.channels > 1) shape.push_back(img.channels);
  U8Array out(shape);
  std::copy(img.data.begin(), img.data.end(), out.mutable_data());
  return out;
}

DisparityMap to_map(const F32Array& values, const std::optional<U8Array>& valid) {
  if (values.ndim() != 2) throw std::invalid_argument("disparity must be [h, w]");
  DisparityMap m(values.shape(0), values.shape(1));
  std::copy(values.data(), values.data() + values.size(), m.values.begin());
  if (valid) {
    if (valid->size() != values.size()) throw std::invalid_argument("valid mask size differs from disparity");
    std::copy(valid->data(), valid->data() + valid->size(), m.valid.begin());
  }
  return m;
}

py::tuple from_map(const DisparityMap& m) {
  F32Array values({m.height, m.width});
  U8Array valid({m.height, m.width});
  std::copy(m.values.begin(), m.values.end(), values.mutable_data());
  std::copy(m.valid.begin(), m.valid.end(), valid.mutable_data());
  return py::make_tuple(values, valid);
}

py::dict metrics_dict(const MetricReport& r) {
  py::dict d;
  d["epe"] = r.epe;
  d["d1"] = r.d1;
  d["valid"] = r.valid_count;
  py::dict pep;
  for (const auto& [delta, pct] : r.pep) pep[py::float_(delta)] = pct;
  d["pep"] = pep;
  return d;
}

class Predictor {
 public:
  Predictor(const std::string& config_text, const std::optional<std::string>& checkpoint)
      : config_(parse_config(config_text)), model_(config_.model, config_.run.seed) {
    if (checkpoint) load_into(model_.params(), load_checkpoint(*checkpoint));
  }
  py::tuple predict(const U8Array& left, const U8Array& right) const {
    return from_map(model_.predict(to_image(left), to_image(right)));
  }
  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : model_.params().all()) n += p.value().numel();
    return n;
  }

 private:
  RunConfig config_;
  StereoModel<float> model_;
};

CommonOptions options(const std::optional<std::string>& config, const std::string& out,
                      const std::optional<std::string>& checkpoint, const std::optional<std::uint64_t>& seed) {
  CommonOptions o;
  o.config = config;
  o.out = out;
  o.checkpoint = checkpoint;
  o.seed = seed;
  return o;
}

}  // namespace

PYBIND11_MODULE(_vitas, m) {
  m.doc() = "Stereo matching with a plain ViT backbone and a multi-scale adapter";

  m.def("local_patch_attention",
        [](const F32Array& q, const F32Array& k, const F32Array& v_d) {
          return to_array(local_patch_attention_apply(to_tensor(q), to_tensor(k), to_tensor(v_d)));
        },
        py::arg("q"), py::arg("k"), py::arg("v_d"), "q, v_d: [n, 4, c]; k: [n, 1, c] -> [n, 4, c]");
  m.def("dense_attention",
        [](const F32Array& q, const F32Array& k, const F32Array& v_d) {
          return to_array(dense_attention_apply(to_tensor(q), to_tensor(k), to_tensor(v_d)));
        },
        py::arg("q"), py::arg("k"), py::arg("v_d"), "q, v_d: [n, 4, c]; k: [n, 1, c] -> [n, c]");
  m.def("flop_count",
        [](std::int64_t h, std::int64_t w, std::int64_t c) {
          const auto f = pafm_flop_count(h, w, c);
          return py::make_tuple(f.local, f.dense);
        },
        py::arg("h"), py::arg("w"), py::arg("c"), "(local, dense) multiply-adds for an h x w coarse grid");

  m.def("compute_metrics",
        [](const F32Array& pred, const F32Array& gt, const std::optional<U8Array>& valid) {
          return metrics_dict(compute_metrics(to_map(pred, std::nullopt), to_map(gt, valid)));
        },
        py::arg("pred"), py::arg("gt"), py::arg("valid") = std::nullopt);

  m.def("encode_pfm",
        [](const F32Array& values, const std::optional<U8Array>& valid) {
          const auto bytes = encode_pfm(to_map(values, valid));
          return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        },
        py::arg("values"), py::arg("valid") = std::nullopt);
  m.def("decode_pfm", [](const py::bytes& data) {
    const std::string s = data;
    return from_map(decode_pfm(std::vector<std::uint8_t>(s.begin(), s.end())));
  });
  m.def("read_pfm", [](const std::string& path) { return from_map(read_pfm(path)); });
  m.def("write_pfm", [](const std::string& path, const F32Array& values, const std::optional<U8Array>& valid) {
    write_pfm(path, to_map(values, valid));
  }, py::arg("path"), py::arg("values"), py::arg("valid") = std::nullopt);

  m.def("gen_rds",
        [](std::int64_t width, std::int64_t height, int d_max, double density, int dot_size, bool binary,
           std::uint64_t seed) {
          RdsOptions o;
          o.width = width;
          o.height = height;
          o.d_max = d_max;
          o.density = density;
          o.dot_size = dot_size;
          o.binary = binary;
          o.seed = seed;
          const auto s = gen_rds(o);
          const auto gt = from_map(s.gt);
          return py::make_tuple(from_image(s.left), from_image(s.right), gt[0], gt[1]);
        },
        py::arg("width") = 128, py::arg("height") = 64, py::arg("d_max") = 16, py::arg("density") = 1.0,
        py::arg("dot_size") = 1, py::arg("binary") = false, py::arg("seed") = 0,
        "(left, right, disparity, valid) random-dot stereogram");

  m.def("default_config", [] { return print_config(parse_config("")); });

  py::class_<Predictor>(m, "Model")
      .def(py::init<const std::string&, const std::optional<std::string>&>(), py::arg("config") = "",
           py::arg("checkpoint") = std::nullopt, "Model from config text, optionally loading a checkpoint")
      .def("predict", &Predictor::predict, py::arg("left"), py::arg("right"), "(disparity, valid) at input size")
      .def_property_readonly("parameter_count", &Predictor::parameter_count);

  m.def("train",
        [](const std::optional<std::string>& config, const std::string& out,
           const std::optional<std::string>& checkpoint, const std::optional<std::uint64_t>& seed) {
          std::ostringstream log;
          const int code = cmd_train(options(config, out, checkpoint, seed), log);
          return py::make_tuple(code, log.str());
        },
        py::arg("config") = std::nullopt, py::arg("out") = "out", py::arg("checkpoint") = std::nullopt,
        py::arg("seed") = std::nullopt, "(exit code, log text)");
  m.def("evaluate",
        [](const std::string& out, const std::optional<std::string>& data_dir) {
          std::ostringstream table;
          cmd_eval(options(std::nullopt, out, std::nullopt, std::nullopt), data_dir, table);
          return table.str();
        },
        py::arg("out"), py::arg("data_dir") = std::nullopt, "CSV table for the checkpoint in <out>");

  py::register_exception<UserError>(m, "UserError", PyExc_ValueError);
  py::register_exception<PfmError>(m, "PfmError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
}
