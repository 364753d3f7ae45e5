#include "vitas/sdm.hpp"

#include <stdexcept>

namespace vitas {

void SdmConfig::validate() const {
  for (std::size_t k = 0; k < 4; ++k) {
    if (channels[k] < 1 || channels[k] > token_channels) {
      throw std::invalid_argument("sdm: level " + std::to_string(k) + " channels must lie in [1, token_channels]");
    }
  }
  if (norm_groups < 1) throw std::invalid_argument("sdm: norm_groups must be >= 1");
}

template <typename T>
Sdm<T>::Sdm(ParameterSet<T>& ps, const std::string& prefix, const SdmConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const auto ct = config_.token_channels;
  const auto& c = config_.channels;
  auto groups = [&](std::int64_t ch) { return group_count_for(ch, config_.norm_groups); };
  d0_.conv = Conv2d<T>(ps, prefix + ".d0.conv", ct, c[0], 3, 2, 1, rng);
  d0_.norm = GroupNorm<T>(ps, prefix + ".d0.norm", c[0], groups(c[0]));
  d1_.conv = Conv2d<T>(ps, prefix + ".d1.conv", ct, c[1], 3, 1, 1, rng);
  d1_.norm = GroupNorm<T>(ps, prefix + ".d1.norm", c[1], groups(c[1]));
  d2_.transposed = true;
  d2_.deconv = ConvTranspose2d<T>(ps, prefix + ".d2.deconv", ct, c[2], 4, 2, rng);
  d2_.norm = GroupNorm<T>(ps, prefix + ".d2.norm", c[2], groups(c[2]));
  d3a_.transposed = true;
  d3a_.deconv = ConvTranspose2d<T>(ps, prefix + ".d3.deconv0", ct, c[3], 4, 2, rng);
  d3a_.norm = GroupNorm<T>(ps, prefix + ".d3.norm0", c[3], groups(c[3]));
  d3b_.transposed = true;
  d3b_.deconv = ConvTranspose2d<T>(ps, prefix + ".d3.deconv1", c[3], c[3], 4, 2, rng);
  d3b_.norm = GroupNorm<T>(ps, prefix + ".d3.norm1", c[3], groups(c[3]));
}

template <typename T>
Tensor<T> Sdm<T>::run(const Stage& s, const Tensor<T>& x) const {
  return ops::gelu(s.norm(s.transposed ? s.deconv(x) : s.conv(x)));
}

template <typename T>
InitPyramid<T> Sdm<T>::build_init_pyramid(const TokenSet<T>& tokens) const {
  const auto& grid = tokens.taps[0].shape();
  for (const auto& t : tokens.taps) {
    if (t.shape() != grid) throw ShapeError("sdm: token taps differ in shape");
  }
  if (grid.size() != 3 || grid[0] != config_.token_channels) {
    throw ShapeError("sdm: taps must be [" + std::to_string(config_.token_channels) + ",h,w], got " +
                     shape_string(grid));
  }
  if (grid[1] % 2 != 0) throw ShapeError("sdm: token grid height (axis 1) is odd; the 1/32 level needs it even");
  if (grid[2] % 2 != 0) throw ShapeError("sdm: token grid width (axis 2) is odd; the 1/32 level needs it even");
  InitPyramid<T> out;
  out.levels[0] = run(d0_, tokens.taps[3]);
  out.levels[1] = run(d1_, tokens.taps[2]);
  out.levels[2] = run(d2_, tokens.taps[1]);
  out.levels[3] = run(d3b_, run(d3a_, tokens.taps[0]));
  return out;
}

template class Sdm<float>;
template class Sdm<double>;

}  // namespace vitas
