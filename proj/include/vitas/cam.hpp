#pragma once

#include <utility>
#include <vector>

#include "vitas/attention.hpp"

namespace vitas {

struct CamConfig {
  std::int64_t channels = 64;
  int num_attention_blocks = 2;
  int num_heads = 4;
  int mlp_ratio = 2;

  void validate() const;
};

/// Fixed 2-D sinusoidal encoding [h*w, c]: c/4 frequencies each for sin(y),
/// cos(y), sin(x), cos(x). Requires c divisible by 4.
template <typename T>
Tensor<T> sinusoidal_position_encoding(std::int64_t channels, std::int64_t h, std::int64_t w);

/// [c, h, w] <-> token rows [h*w, c].
template <typename T>
Tensor<T> to_tokens(const Tensor<T>& map);
template <typename T>
Tensor<T> from_tokens(const Tensor<T>& tokens, std::int64_t h, std::int64_t w);

/// Stereo context aggregation at one pyramid level. Each block applies a
/// self-attention layer to both views, then a cross-attention layer in which
/// each view queries the other view's self-attended features. Both views run
/// through the same parameters.
template <typename T>
class Cam {
 public:
  Cam() = default;
  Cam(ParameterSet<T>& ps, const std::string& prefix, const CamConfig& config, Rng& rng);

  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& left, const Tensor<T>& right) const;

  /// One pre-norm attention + FFN layer on token rows, with the positional
  /// encoding added to queries and keys.
  Tensor<T> attention_layer(const AttentionBlock<T>& layer, const Tensor<T>& q_src, const Tensor<T>& kv_src,
                            const Tensor<T>& pos) const;

  const CamConfig& config() const { return config_; }
  const AttentionBlock<T>& self_layer(int block) const { return self_.at(static_cast<std::size_t>(block)); }
  const AttentionBlock<T>& cross_layer(int block) const { return cross_.at(static_cast<std::size_t>(block)); }

 private:
  CamConfig config_;
  std::vector<AttentionBlock<T>> self_, cross_;
};

}  // namespace vitas
