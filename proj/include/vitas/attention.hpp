#pragma once

#include <string>

#include "vitas/nn.hpp"

namespace vitas {

/// Multi-head scaled dot-product attention over token rows [N, c].
template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet<T>& ps, const std::string& prefix, std::int64_t channels, int heads, Rng& rng);

  /// query [N, c], key/value [M, c] -> [N, c]
  Tensor<T> operator()(const Tensor<T>& query, const Tensor<T>& key, const Tensor<T>& value) const;
  /// Softmax-normalized attention weights [heads, N, M].
  Tensor<T> weights(const Tensor<T>& query, const Tensor<T>& key) const;

  int heads() const { return heads_; }
  const Linear<T>& q_proj() const { return q_; }
  const Linear<T>& k_proj() const { return k_; }
  const Linear<T>& v_proj() const { return v_; }
  const Linear<T>& out_proj() const { return out_; }

 private:
  Tensor<T> split_heads(const Tensor<T>& x) const;
  Linear<T> q_, k_, v_, out_;
  int heads_ = 1;
  std::int64_t channels_ = 0;
};

/// Pre-norm transformer layer: x + Attn(LN(x) + pos, LN(ctx) + pos_ctx, LN(ctx)),
/// then x + FFN(LN(x)) with a GELU hidden layer of mlp_ratio * c.
template <typename T>
class AttentionBlock {
 public:
  AttentionBlock() = default;
  AttentionBlock(ParameterSet<T>& ps, const std::string& prefix, std::int64_t channels, int heads, int mlp_ratio,
                 Rng& rng);

  /// x [N, c] is the residual stream; context [M, c] supplies keys and values.
  /// Positional terms are optional (undefined tensors are skipped).
  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& context, const Tensor<T>& pos_x = {},
                    const Tensor<T>& pos_context = {}) const;
  Tensor<T> self_forward(const Tensor<T>& x, const Tensor<T>& pos = {}) const;

  const MultiHeadAttention<T>& attention() const { return attn_; }
  const LayerNorm<T>& norm1() const { return norm1_; }
  const LayerNorm<T>& norm2() const { return norm2_; }
  const Linear<T>& fc1() const { return fc1_; }
  const Linear<T>& fc2() const { return fc2_; }

 private:
  Tensor<T> feed_forward(const Tensor<T>& x) const;
  LayerNorm<T> norm1_, norm2_;
  MultiHeadAttention<T> attn_;
  Linear<T> fc1_, fc2_;
};

}  // namespace vitas
