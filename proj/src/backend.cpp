#include "vitas/backend.hpp"

#include <cmath>
#include <stdexcept>

namespace vitas {

template <typename T>
Tensor<T> build_cost_volume(const Tensor<T>& left, const Tensor<T>& right, int d_max) {
  if (left.shape() != right.shape()) {
    throw ShapeError("cost volume: view shapes differ, " + shape_string(left.shape()) + " vs " +
                     shape_string(right.shape()));
  }
  if (left.rank() != 3) throw ShapeError("cost volume: expected [c,h,w], got " + shape_string(left.shape()));
  const auto c = left.dim(0), h = left.dim(1), w = left.dim(2);
  if (d_max < 0 || d_max % 4 != 0) throw std::invalid_argument("cost volume: d_max must be a non-negative multiple of 4");
  if (d_max > 4 * w) throw std::invalid_argument("cost volume: d_max exceeds 4x the feature width");
  const auto nl = ops::l2_normalize(left, 0, T(1e-6));
  const auto nr = ops::l2_normalize(right, 0, T(1e-6));
  const int planes = d_max / 4 + 1;
  std::vector<Tensor<T>> out;
  out.reserve(static_cast<std::size_t>(planes));
  for (int d = 0; d < planes; ++d) {
    Tensor<T> shifted = nr;
    Tensor<T> mask({1, h, w}, T(0));
    if (d > 0) {
      std::vector<std::int64_t> idx(static_cast<std::size_t>(c * h * w));
      std::size_t o = 0;
      for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t y = 0; y < h; ++y)
          for (std::int64_t x = 0; x < w; ++x) idx[o++] = x >= d ? (ch * h + y) * w + x - d : -1;
      shifted = ops::gather(nr, idx, {c, h, w});
      auto m = mask.mutable_values();
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < std::min<std::int64_t>(d, w); ++x) m[static_cast<std::size_t>(y * w + x)] = T(kMaskedCost);
    }
    out.push_back(ops::add(ops::sum(ops::mul(nl, shifted), 0), mask));
  }
  return ops::concat(out, 0);
}

template <typename T>
Tensor<T> soft_argmin(const Tensor<T>& volume) {
  if (volume.rank() != 3) throw ShapeError("soft_argmin: expected [D,h,w], got " + shape_string(volume.shape()));
  const auto d = volume.dim(0), plane = volume.dim(1) * volume.dim(2);
  std::vector<T> levels(static_cast<std::size_t>(d * plane));
  for (std::int64_t k = 0; k < d; ++k)
    std::fill_n(levels.begin() + k * plane, plane, static_cast<T>(k));
  auto p = ops::softmax(volume, 0);
  return ops::sum(ops::mul(p, Tensor<T>(volume.shape(), std::move(levels))), 0, false);
}

template <typename T>
Tensor<T> upsample_disparity(const Tensor<T>& quarter) {
  if (quarter.rank() != 2) throw ShapeError("upsample_disparity: expected [h,w], got " + shape_string(quarter.shape()));
  const auto h = quarter.dim(0), w = quarter.dim(1);
  auto up = ops::bilinear_resize(ops::reshape(quarter, {1, h, w}), 4 * h, 4 * w);
  return ops::reshape(ops::scale(up, T(4)), {4 * h, 4 * w});
}

template <typename T>
Tensor<T> disparity_loss(const Tensor<T>& pred, const DisparityMap& gt) {
  if (pred.rank() != 2 || pred.dim(0) != gt.height || pred.dim(1) != gt.width) {
    throw ShapeError("disparity_loss: prediction " + shape_string(pred.shape()) + " vs gt [" +
                     std::to_string(gt.height) + ", " + std::to_string(gt.width) + "]");
  }
  std::vector<T> target(gt.values.begin(), gt.values.end());
  return ops::smooth_l1_loss(pred, Tensor<T>(pred.shape(), std::move(target)), gt.valid);
}

template <typename T>
static DisparityMap to_map(const Tensor<T>& values) {
  if (values.rank() != 2) throw ShapeError("to_disparity_map: expected [h,w]");
  DisparityMap m(values.dim(0), values.dim(1));
  const auto v = values.values();
  for (std::size_t i = 0; i < v.size(); ++i) m.values[i] = static_cast<float>(v[i]);
  return m;
}

DisparityMap to_disparity_map(const Tensor<float>& values) { return to_map(values); }
DisparityMap to_disparity_map(const Tensor<double>& values) { return to_map(values); }

template <typename T>
StereoBackend<T>::StereoBackend(ParameterSet<T>& ps, const std::string& prefix, int d_max) : d_max_(d_max) {
  if (d_max < 4 || d_max % 4 != 0) throw std::invalid_argument("backend: d_max must be a positive multiple of 4");
  log_temperature_ = &ps.add(prefix + ".log_temperature", Tensor<T>({1, 1, 1}, static_cast<T>(std::log(10.0))));
}

template <typename T>
Tensor<T> StereoBackend<T>::forward(const Tensor<T>& left, const Tensor<T>& right) const {
  auto volume = build_cost_volume(left, right, d_max_);
  auto t = ops::exp(log_temperature_->value());
  t = ops::broadcast_replicate(ops::broadcast_replicate(ops::broadcast_replicate(t, 0, volume.dim(0)), 1, volume.dim(1)),
                               2, volume.dim(2));
  return upsample_disparity(soft_argmin(ops::mul(volume, t)));
}

template Tensor<float> build_cost_volume(const Tensor<float>&, const Tensor<float>&, int);
template Tensor<double> build_cost_volume(const Tensor<double>&, const Tensor<double>&, int);
template Tensor<float> soft_argmin(const Tensor<float>&);
template Tensor<double> soft_argmin(const Tensor<double>&);
template Tensor<float> upsample_disparity(const Tensor<float>&);
template Tensor<double> upsample_disparity(const Tensor<double>&);
template Tensor<float> disparity_loss(const Tensor<float>&, const DisparityMap&);
template Tensor<double> disparity_loss(const Tensor<double>&, const DisparityMap&);
template class StereoBackend<float>;
template class StereoBackend<double>;

}  // namespace vitas
