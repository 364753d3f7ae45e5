#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "vitas/disparity.hpp"
#include "vitas/image_io.hpp"

namespace vitas {

struct StereoSample {
  Image left, right;  // 8-bit gray
  DisparityMap gt;    // left-view disparity; occluded pixels invalid
  std::string id;
};

struct RdsOptions {
  std::int64_t width = 128;
  std::int64_t height = 64;
  int d_max = 16;
  /// Probability that a dot is lit. Lit dots get a random gray level in
  /// grayscale mode and full white in binary mode.
  double density = 1.0;
  int dot_size = 1;
  bool binary = false;
  std::uint64_t seed = 0;
  /// Fixed disparities instead of the random d_fg in [4, d_max], d_bg in [0, 2].
  std::optional<int> foreground_disparity;
  std::optional<int> background_disparity;
};

/// Random-dot stereogram with a rectangular or elliptical foreground on a
/// constant background. The right view is a forward warp of the left one with a
/// z-buffer (nearer surface wins); uncovered right pixels receive fresh dots.
/// Left pixels that are occluded or map outside the right image are invalid.
/// Throws std::invalid_argument unless d_max < width / 4.
StereoSample gen_rds(const RdsOptions& options);
StereoSample gen_rds(std::int64_t width, std::int64_t height, int d_max, double density, std::uint64_t seed);

/// Verifies left(y, x) == right(y, x - gt(y, x)) at every valid pixel.
bool warp_identity_holds(const StereoSample& sample);

}  // namespace vitas
