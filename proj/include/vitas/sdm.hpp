#pragma once

#include <array>

#include "vitas/backbone.hpp"
#include "vitas/nn.hpp"

namespace vitas {

struct SdmConfig {
  std::int64_t token_channels = 64;
  /// Output channels of D0..D3; each must not exceed token_channels.
  std::array<std::int64_t, 4> channels{64, 64, 48, 32};
  int norm_groups = 8;

  void validate() const;
};

/// Initial pyramid D0..D3 at 1/32, 1/16, 1/8, 1/4 of the image.
template <typename T>
struct InitPyramid {
  std::array<Tensor<T>, 4> levels;
};

/// Spatial differentiation: deeper taps feed coarser levels.
///   tap 3 (deepest) -> conv s2        -> D0
///   tap 2           -> conv s1        -> D1
///   tap 1           -> convT x2       -> D2
///   tap 0           -> convT x2, x2   -> D3
/// Every stage ends in GroupNorm + GELU.
template <typename T>
class Sdm {
 public:
  Sdm() = default;
  Sdm(ParameterSet<T>& ps, const std::string& prefix, const SdmConfig& config, Rng& rng);

  InitPyramid<T> build_init_pyramid(const TokenSet<T>& tokens) const;
  const SdmConfig& config() const { return config_; }

 private:
  struct Stage {
    Conv2d<T> conv;
    ConvTranspose2d<T> deconv;
    bool transposed = false;
    GroupNorm<T> norm;
  };
  Tensor<T> run(const Stage& s, const Tensor<T>& x) const;

  SdmConfig config_;
  Stage d0_, d1_, d2_, d3a_, d3b_;
};

}  // namespace vitas
