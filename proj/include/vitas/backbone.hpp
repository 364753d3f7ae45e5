#pragma once

#include <array>
#include <vector>

#include "vitas/attention.hpp"
#include "vitas/nn.hpp"

namespace vitas {

struct BackboneConfig {
  int patch_size = 16;  // 16, or 14 with prescale
  int num_blocks = 8;
  std::int64_t token_channels = 64;
  int num_heads = 4;
  int unfrozen_tail = 8;
  int mlp_ratio = 2;
  // Grid the positional embedding is stored at; resized for other inputs.
  std::int64_t base_grid_h = 4;
  std::int64_t base_grid_w = 8;

  void validate() const;
};

enum class ViewTag { left, right };

template <typename T>
struct ImageView {
  Tensor<T> pixels;  // [3, h, w], values in [0, 1]
  ViewTag tag = ViewTag::left;
};

/// Token maps tapped after blocks N/4, N/2, 3N/4 and N, each [c_T, h/16, w/16].
/// taps[0] is the shallowest, taps[3] the deepest.
template <typename T>
struct TokenSet {
  std::array<Tensor<T>, 4> taps;
};

/// p = 16: identity. p = 14: bilinear resize by 14/16 so the 14-pixel patch grid
/// equals the 16-pixel grid of the original image.
template <typename T>
ImageView<T> prescale(const ImageView<T>& image, int patch_size);

/// Plain ViT: patch embedding, learned positional embedding, and pre-norm
/// transformer blocks.
template <typename T>
class VitBackbone {
 public:
  VitBackbone(ParameterSet<T>& ps, const BackboneConfig& config, Rng& rng, const std::string& prefix = "backbone");

  /// `image` must already be prescaled for the configured patch size.
  TokenSet<T> encode(const ImageView<T>& image) const;
  /// Patch embedding plus positional embedding: [3, h, w] -> tokens [N, c_T].
  Tensor<T> embed(const Tensor<T>& pixels) const;

  /// Blocks before N - unfrozen_tail are frozen; the embeddings are frozen
  /// whenever any block is.
  void set_freezing(int unfrozen_tail);

  const BackboneConfig& config() const { return config_; }
  const AttentionBlock<T>& block(int i) const { return blocks_.at(static_cast<std::size_t>(i)); }
  /// Parameter name prefixes of each block, for freezing audits.
  std::string block_prefix(int i) const;

 private:
  BackboneConfig config_;
  ParameterSet<T>* params_;
  std::string prefix_;
  Conv2d<T> patch_embed_;
  Parameter<T>* pos_embed_ = nullptr;  // [c_T, base_h, base_w]
  std::vector<AttentionBlock<T>> blocks_;
};

}  // namespace vitas
