#include "vitas/cam.hpp"

#include <cmath>
#include <stdexcept>

namespace vitas {

void CamConfig::validate() const {
  if (num_attention_blocks < 1) throw std::invalid_argument("cam: num_attention_blocks must be >= 1");
  if (num_heads < 1 || channels % num_heads != 0) {
    throw std::invalid_argument("cam: " + std::to_string(channels) + " channels not divisible by " +
                                std::to_string(num_heads) + " heads");
  }
  if (channels % 4 != 0) throw std::invalid_argument("cam: channels must be divisible by 4 for position encoding");
  if (mlp_ratio < 1) throw std::invalid_argument("cam: mlp_ratio must be >= 1");
}

template <typename T>
Tensor<T> sinusoidal_position_encoding(std::int64_t channels, std::int64_t h, std::int64_t w) {
  if (channels % 4 != 0) throw std::invalid_argument("position encoding: channels must be divisible by 4");
  const auto f = channels / 4;
  std::vector<T> out(static_cast<std::size_t>(h * w * channels));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      T* row = out.data() + (y * w + x) * channels;
      for (std::int64_t k = 0; k < f; ++k) {
        const double omega = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(f));
        row[k] = static_cast<T>(std::sin(y * omega));
        row[f + k] = static_cast<T>(std::cos(y * omega));
        row[2 * f + k] = static_cast<T>(std::sin(x * omega));
        row[3 * f + k] = static_cast<T>(std::cos(x * omega));
      }
    }
  }
  return Tensor<T>({h * w, channels}, std::move(out));
}

template <typename T>
Tensor<T> to_tokens(const Tensor<T>& map) {
  if (map.rank() != 3) throw ShapeError("to_tokens: expected [c,h,w], got " + shape_string(map.shape()));
  return ops::permute(ops::reshape(map, {map.dim(0), map.dim(1) * map.dim(2)}), {1, 0});
}

template <typename T>
Tensor<T> from_tokens(const Tensor<T>& tokens, std::int64_t h, std::int64_t w) {
  return ops::reshape(ops::permute(tokens, {1, 0}), {tokens.dim(1), h, w});
}

template <typename T>
Cam<T>::Cam(ParameterSet<T>& ps, const std::string& prefix, const CamConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  for (int b = 0; b < config_.num_attention_blocks; ++b) {
    const auto p = prefix + ".blocks." + std::to_string(b);
    self_.emplace_back(ps, p + ".self", config_.channels, config_.num_heads, config_.mlp_ratio, rng);
    cross_.emplace_back(ps, p + ".cross", config_.channels, config_.num_heads, config_.mlp_ratio, rng);
  }
}

template <typename T>
Tensor<T> Cam<T>::attention_layer(const AttentionBlock<T>& layer, const Tensor<T>& q_src, const Tensor<T>& kv_src,
                                  const Tensor<T>& pos) const {
  return layer.forward(q_src, kv_src, pos, pos);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> Cam<T>::forward(const Tensor<T>& left, const Tensor<T>& right) const {
  if (left.shape() != right.shape()) {
    throw ShapeError("cam: view shapes differ, " + shape_string(left.shape()) + " vs " + shape_string(right.shape()));
  }
  if (left.rank() != 3 || left.dim(0) != config_.channels) {
    throw ShapeError("cam: expected [" + std::to_string(config_.channels) + ",h,w], got " +
                     shape_string(left.shape()));
  }
  const auto h = left.dim(1), w = left.dim(2);
  const auto pos = sinusoidal_position_encoding<T>(config_.channels, h, w);
  auto l = to_tokens(left);
  auto r = to_tokens(right);
  for (std::size_t b = 0; b < self_.size(); ++b) {
    auto ls = attention_layer(self_[b], l, l, pos);
    auto rs = attention_layer(self_[b], r, r, pos);
    l = attention_layer(cross_[b], ls, rs, pos);
    r = attention_layer(cross_[b], rs, ls, pos);
  }
  return {from_tokens(l, h, w), from_tokens(r, h, w)};
}

template Tensor<float> sinusoidal_position_encoding<float>(std::int64_t, std::int64_t, std::int64_t);
template Tensor<double> sinusoidal_position_encoding<double>(std::int64_t, std::int64_t, std::int64_t);
template Tensor<float> to_tokens(const Tensor<float>&);
template Tensor<double> to_tokens(const Tensor<double>&);
template Tensor<float> from_tokens(const Tensor<float>&, std::int64_t, std::int64_t);
template Tensor<double> from_tokens(const Tensor<double>&, std::int64_t, std::int64_t);
template class Cam<float>;
template class Cam<double>;

}  // namespace vitas
