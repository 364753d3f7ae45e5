#pragma once

#include <memory>

#include "vitas/adapter.hpp"
#include "vitas/backbone.hpp"
#include "vitas/backend.hpp"
#include "vitas/image_io.hpp"

namespace vitas {

struct ModelConfig {
  BackboneConfig backbone;
  AdapterConfig adapter;
  int d_max = 16;

  void validate() const;
};

/// Input dims must be multiples of this (the 1/32 level must be integral).
inline constexpr std::int64_t kInputAlignment = 32;

/// Backbone, adapter and back-end over one shared parameter set.
template <typename T>
class StereoModel {
 public:
  StereoModel(const ModelConfig& config, std::uint64_t seed);
  StereoModel(const StereoModel&) = delete;
  StereoModel& operator=(const StereoModel&) = delete;

  /// Pixels [3, h, w] per view -> full-resolution disparity [h, w].
  Tensor<T> forward(const Tensor<T>& left, const Tensor<T>& right) const;
  /// Feature pyramids for both views.
  std::pair<FeaturePyramid<T>, FeaturePyramid<T>> features(const Tensor<T>& left, const Tensor<T>& right) const;

  /// Inference on arbitrary-sized images: reflection-pads to kInputAlignment,
  /// runs without a tape and crops back to the input size.
  DisparityMap predict(const Image& left, const Image& right) const;

  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  const ModelConfig& config() const { return config_; }
  VitBackbone<T>& backbone() { return *backbone_; }
  const Vitas<T>& adapter() const { return adapter_; }
  const StereoBackend<T>& backend() const { return backend_; }

 private:
  ModelConfig config_;
  ParameterSet<T> params_;
  std::unique_ptr<VitBackbone<T>> backbone_;
  Vitas<T> adapter_;
  StereoBackend<T> backend_;
};

/// Mirror padding (without edge repeat) on the bottom and right.
Image reflect_pad(const Image& image, std::int64_t height, std::int64_t width);

}  // namespace vitas
