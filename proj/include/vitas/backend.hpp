#pragma once

#include "vitas/disparity.hpp"
#include "vitas/nn.hpp"

namespace vitas {

/// Score given to shifts that fall outside the right image.
inline constexpr double kMaskedCost = -1e4;

/// Cosine correlation volume [d_max/4 + 1, h, w] between quarter-resolution
/// features: entry (d, y, x) = <n_L(y, x), n_R(y, x - d)> with unit-normalized
/// channel vectors, kMaskedCost where x - d < 0.
template <typename T>
Tensor<T> build_cost_volume(const Tensor<T>& left, const Tensor<T>& right, int d_max);

/// Expected disparity sum_d d * softmax_d(volume): [D, h, w] -> [h, w].
template <typename T>
Tensor<T> soft_argmin(const Tensor<T>& volume);

/// Bilinear x4 upsampling with values scaled by 4: [h, w] -> [4h, 4w].
template <typename T>
Tensor<T> upsample_disparity(const Tensor<T>& quarter);

/// Smooth-L1 (beta = 1) averaged over valid ground-truth pixels.
template <typename T>
Tensor<T> disparity_loss(const Tensor<T>& pred, const DisparityMap& gt);

DisparityMap to_disparity_map(const Tensor<float>& values);
DisparityMap to_disparity_map(const Tensor<double>& values);

/// Cost volume, learnable inverse temperature, soft-argmin and upsampling.
template <typename T>
class StereoBackend {
 public:
  StereoBackend() = default;
  StereoBackend(ParameterSet<T>& ps, const std::string& prefix, int d_max);

  /// Quarter-resolution features [c, h, w] per view -> disparity [4h, 4w].
  Tensor<T> forward(const Tensor<T>& left, const Tensor<T>& right) const;
  int d_max() const { return d_max_; }
  const Parameter<T>& log_temperature() const { return *log_temperature_; }

 private:
  int d_max_ = 16;
  Parameter<T>* log_temperature_ = nullptr;  // volume is scaled by exp(.)
};

}  // namespace vitas
