#include "vitas/stereo_model.hpp"

#include <stdexcept>

namespace vitas {

void ModelConfig::validate() const {
  backbone.validate();
  adapter.validate();
  if (adapter.sdm.token_channels != backbone.token_channels) {
    throw std::invalid_argument("model: adapter token_channels differ from backbone token_channels");
  }
  if (d_max < 4 || d_max % 4 != 0) throw std::invalid_argument("model: d_max must be a positive multiple of 4");
}

template <typename T>
StereoModel<T>::StereoModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  backbone_ = std::make_unique<VitBackbone<T>>(params_, config_.backbone, rng);
  adapter_ = Vitas<T>(params_, config_.adapter, rng);
  backend_ = StereoBackend<T>(params_, "backend", config_.d_max);
}

template <typename T>
std::pair<FeaturePyramid<T>, FeaturePyramid<T>> StereoModel<T>::features(const Tensor<T>& left,
                                                                         const Tensor<T>& right) const {
  if (left.shape() != right.shape()) throw ShapeError("model: left and right images differ in shape");
  const int p = config_.backbone.patch_size;
  const auto tl = backbone_->encode(prescale(ImageView<T>{left, ViewTag::left}, p));
  const auto tr = backbone_->encode(prescale(ImageView<T>{right, ViewTag::right}, p));
  return adapter_.forward(tl, tr);
}

template <typename T>
Tensor<T> StereoModel<T>::forward(const Tensor<T>& left, const Tensor<T>& right) const {
  if (left.rank() != 3 || left.dim(1) % kInputAlignment != 0 || left.dim(2) % kInputAlignment != 0) {
    throw ShapeError("model: image dims must be multiples of 32, got " + shape_string(left.shape()));
  }
  const auto [fl, fr] = features(left, right);
  return backend_.forward(fl.levels[3], fr.levels[3]);
}

Image reflect_pad(const Image& image, std::int64_t height, std::int64_t width) {
  if (height < image.height || width < image.width) throw std::invalid_argument("reflect_pad: target smaller than image");
  auto mirror = [](std::int64_t i, std::int64_t n) {
    if (n == 1) return std::int64_t{0};
    const auto period = 2 * (n - 1);
    i %= period;
    return i < n ? i : period - i;
  };
  Image out(width, height, image.channels);
  for (std::int64_t y = 0; y < height; ++y)
    for (std::int64_t x = 0; x < width; ++x)
      for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(mirror(y, image.height), mirror(x, image.width), c);
  return out;
}

template <typename T>
DisparityMap StereoModel<T>::predict(const Image& left, const Image& right) const {
  if (left.width != right.width || left.height != right.height) {
    throw std::invalid_argument("predict: left is " + std::to_string(left.width) + "x" + std::to_string(left.height) +
                                ", right is " + std::to_string(right.width) + "x" + std::to_string(right.height));
  }
  auto align = [](std::int64_t n) { return (n + kInputAlignment - 1) / kInputAlignment * kInputAlignment; };
  const auto ph = align(left.height), pw = align(left.width);
  NoGradGuard no_grad;
  const auto disp = forward(image_to_tensor<T>(reflect_pad(left, ph, pw)), image_to_tensor<T>(reflect_pad(right, ph, pw)));
  DisparityMap out(left.height, left.width);
  const auto v = disp.values();
  for (std::int64_t y = 0; y < left.height; ++y)
    for (std::int64_t x = 0; x < left.width; ++x) out.at(y, x) = static_cast<float>(v[static_cast<std::size_t>(y * pw + x)]);
  return out;
}

template class StereoModel<float>;
template class StereoModel<double>;

}  // namespace vitas
