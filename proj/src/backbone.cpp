#include "vitas/backbone.hpp"

#include <stdexcept>

namespace vitas {

void BackboneConfig::validate() const {
  if (patch_size != 14 && patch_size != 16) throw std::invalid_argument("backbone: patch_size must be 14 or 16");
  if (num_blocks < 4 || num_blocks % 4 != 0) throw std::invalid_argument("backbone: num_blocks must be a positive multiple of 4");
  if (unfrozen_tail < 0 || unfrozen_tail > num_blocks) {
    throw std::invalid_argument("backbone: unfrozen_tail must lie in [0, num_blocks]");
  }
  if (num_heads < 1 || token_channels % num_heads != 0) {
    throw std::invalid_argument("backbone: token_channels must be divisible by num_heads");
  }
  if (mlp_ratio < 1 || base_grid_h < 1 || base_grid_w < 1) throw std::invalid_argument("backbone: invalid sizes");
}

template <typename T>
ImageView<T> prescale(const ImageView<T>& image, int patch_size) {
  if (patch_size != 14 && patch_size != 16) throw std::invalid_argument("prescale: patch size must be 14 or 16");
  if (patch_size == 16) return image;
  const auto h = image.pixels.dim(1), w = image.pixels.dim(2);
  if ((h * 14) % 16 != 0) throw ShapeError("prescale: height " + std::to_string(h) + " (axis 1) not divisible by 8");
  if ((w * 14) % 16 != 0) throw ShapeError("prescale: width " + std::to_string(w) + " (axis 2) not divisible by 8");
  const auto oh = h * 14 / 16, ow = w * 14 / 16;
  if (oh % 14 != 0) throw ShapeError("prescale: resized height " + std::to_string(oh) + " not divisible by 14");
  if (ow % 14 != 0) throw ShapeError("prescale: resized width " + std::to_string(ow) + " not divisible by 14");
  return {ops::bilinear_resize(image.pixels, oh, ow), image.tag};
}

template <typename T>
VitBackbone<T>::VitBackbone(ParameterSet<T>& ps, const BackboneConfig& config, Rng& rng, const std::string& prefix)
    : config_(config), params_(&ps), prefix_(prefix) {
  config_.validate();
  const auto c = config_.token_channels;
  patch_embed_ = Conv2d<T>(ps, prefix + ".patch_embed", 3, c, config_.patch_size, config_.patch_size, 0, rng);
  pos_embed_ = &ps.add(prefix + ".pos_embed", init::normal<T>({c, config_.base_grid_h, config_.base_grid_w}, 0.02, rng));
  for (int i = 0; i < config_.num_blocks; ++i) {
    blocks_.emplace_back(ps, block_prefix(i), c, config_.num_heads, config_.mlp_ratio, rng);
  }
  set_freezing(config_.unfrozen_tail);
}

template <typename T>
std::string VitBackbone<T>::block_prefix(int i) const {
  return prefix_ + ".blocks." + std::to_string(i);
}

template <typename T>
Tensor<T> VitBackbone<T>::embed(const Tensor<T>& pixels) const {
  if (pixels.rank() != 3 || pixels.dim(0) != 3) {
    throw ShapeError("encode: image must be [3,h,w], got " + shape_string(pixels.shape()));
  }
  const int p = config_.patch_size;
  if (pixels.dim(1) % p != 0) throw ShapeError("encode: height (axis 1) not divisible by patch size");
  if (pixels.dim(2) % p != 0) throw ShapeError("encode: width (axis 2) not divisible by patch size");
  auto grid = patch_embed_(pixels);  // [c, gh, gw]
  const auto c = grid.dim(0), gh = grid.dim(1), gw = grid.dim(2);
  auto pos = ops::bilinear_resize(pos_embed_->value(), gh, gw);
  auto tokens = ops::add(grid, pos);
  return ops::permute(ops::reshape(tokens, {c, gh * gw}), {1, 0});
}

template <typename T>
TokenSet<T> VitBackbone<T>::encode(const ImageView<T>& image) const {
  auto x = embed(image.pixels);
  const auto gh = image.pixels.dim(1) / config_.patch_size;
  const auto gw = image.pixels.dim(2) / config_.patch_size;
  const auto c = config_.token_channels;
  const int group = config_.num_blocks / 4;
  TokenSet<T> out;
  for (int i = 0; i < config_.num_blocks; ++i) {
    x = blocks_[static_cast<std::size_t>(i)].self_forward(x);
    if ((i + 1) % group == 0) {
      out.taps[static_cast<std::size_t>((i + 1) / group - 1)] = ops::reshape(ops::permute(x, {1, 0}), {c, gh, gw});
    }
  }
  return out;
}

template <typename T>
void VitBackbone<T>::set_freezing(int unfrozen_tail) {
  if (unfrozen_tail < 0 || unfrozen_tail > config_.num_blocks) {
    throw std::invalid_argument("set_freezing: unfrozen_tail out of range");
  }
  config_.unfrozen_tail = unfrozen_tail;
  const int first_trainable = config_.num_blocks - unfrozen_tail;
  const bool embed_frozen = first_trainable > 0;
  for (auto& p : params_->all()) {
    const auto& name = p.name();
    if (name.rfind(prefix_ + ".", 0) != 0) continue;
    if (name.rfind(prefix_ + ".patch_embed", 0) == 0 || name == prefix_ + ".pos_embed") {
      p.set_frozen(embed_frozen);
      continue;
    }
    for (int i = 0; i < config_.num_blocks; ++i) {
      if (name.rfind(block_prefix(i) + ".", 0) == 0) p.set_frozen(i < first_trainable);
    }
  }
}

template ImageView<float> prescale(const ImageView<float>&, int);
template ImageView<double> prescale(const ImageView<double>&, int);
template class VitBackbone<float>;
template class VitBackbone<double>;

}  // namespace vitas
