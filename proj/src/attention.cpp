#include "vitas/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace vitas {

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(ParameterSet<T>& ps, const std::string& prefix, std::int64_t channels,
                                          int heads, Rng& rng)
    : heads_(heads), channels_(channels) {
  if (heads < 1 || channels % heads != 0) {
    throw std::invalid_argument("attention: " + std::to_string(channels) + " channels not divisible by " +
                                std::to_string(heads) + " heads");
  }
  q_ = Linear<T>(ps, prefix + ".q", channels, channels, rng);
  k_ = Linear<T>(ps, prefix + ".k", channels, channels, rng);
  v_ = Linear<T>(ps, prefix + ".v", channels, channels, rng);
  out_ = Linear<T>(ps, prefix + ".out", channels, channels, rng);
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::split_heads(const Tensor<T>& x) const {
  const auto n = x.dim(0);
  return ops::permute(ops::reshape(x, {n, heads_, channels_ / heads_}), {1, 0, 2});
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::weights(const Tensor<T>& query, const Tensor<T>& key) const {
  auto q = split_heads(q_(query));
  auto k = split_heads(k_(key));
  const T scale = T(1) / std::sqrt(static_cast<T>(channels_ / heads_));
  return ops::softmax(ops::scale(ops::matmul(q, k, true), scale), 2);
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::operator()(const Tensor<T>& query, const Tensor<T>& key,
                                            const Tensor<T>& value) const {
  if (query.rank() != 2 || key.rank() != 2 || value.rank() != 2) {
    throw ShapeError("attention: expected token rows [N, c]");
  }
  if (query.dim(1) != channels_ || key.dim(1) != channels_ || value.dim(1) != channels_) {
    throw ShapeError("attention: channel axis 1 must be " + std::to_string(channels_));
  }
  if (key.dim(0) != value.dim(0)) throw ShapeError("attention: key/value token counts differ on axis 0");
  auto attn = weights(query, key);
  auto v = split_heads(v_(value));
  auto mixed = ops::permute(ops::matmul(attn, v), {1, 0, 2});
  return out_(ops::reshape(mixed, {query.dim(0), channels_}));
}

template <typename T>
AttentionBlock<T>::AttentionBlock(ParameterSet<T>& ps, const std::string& prefix, std::int64_t channels, int heads,
                                  int mlp_ratio, Rng& rng) {
  norm1_ = LayerNorm<T>(ps, prefix + ".norm1", channels);
  attn_ = MultiHeadAttention<T>(ps, prefix + ".attn", channels, heads, rng);
  norm2_ = LayerNorm<T>(ps, prefix + ".norm2", channels);
  fc1_ = Linear<T>(ps, prefix + ".mlp.0", channels, channels * mlp_ratio, rng);
  fc2_ = Linear<T>(ps, prefix + ".mlp.2", channels * mlp_ratio, channels, rng);
}

template <typename T>
Tensor<T> AttentionBlock<T>::feed_forward(const Tensor<T>& x) const {
  return ops::add(x, fc2_(ops::gelu(fc1_(norm2_(x)))));
}

template <typename T>
Tensor<T> AttentionBlock<T>::forward(const Tensor<T>& x, const Tensor<T>& context, const Tensor<T>& pos_x,
                                     const Tensor<T>& pos_context) const {
  auto xn = norm1_(x);
  auto cn = norm1_(context);
  auto q = pos_x.defined() ? ops::add(xn, pos_x) : xn;
  auto k = pos_context.defined() ? ops::add(cn, pos_context) : cn;
  return feed_forward(ops::add(x, attn_(q, k, cn)));
}

template <typename T>
Tensor<T> AttentionBlock<T>::self_forward(const Tensor<T>& x, const Tensor<T>& pos) const {
  auto xn = norm1_(x);
  auto qk = pos.defined() ? ops::add(xn, pos) : xn;
  return feed_forward(ops::add(x, attn_(qk, qk, xn)));
}

template class MultiHeadAttention<float>;
template class MultiHeadAttention<double>;
template class AttentionBlock<float>;
template class AttentionBlock<double>;

}  // namespace vitas
