#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vitas/backbone.hpp"
#include "vitas/disparity.hpp"

namespace vitas {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit image, interleaved row-major; channels is 1 (gray) or 3 (RGB).
struct Image {
  std::int64_t width = 0;
  std::int64_t height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(std::int64_t w, std::int64_t h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w * h * c), fill) {}
  std::uint8_t& at(std::int64_t y, std::int64_t x, int c = 0) {
    return data[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  std::uint8_t at(std::int64_t y, std::int64_t x, int c = 0) const {
    return data[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  bool operator==(const Image&) const = default;
};

Image read_pgm(const std::string& path);
void write_pgm(const std::string& path, const Image& image);  // gray only
Image read_png(const std::string& path);                      // gray or RGB, 8-bit
void write_png(const std::string& path, const Image& image);
/// Dispatch on the file signature (P5 or PNG).
Image read_image(const std::string& path);
/// Dispatch on the extension (.pgm or .png).
void write_image(const std::string& path, const Image& image);

/// Linear ramp from 0 to max_disparity through a fixed 5-stop table; invalid
/// pixels are black.
Image colorize(const DisparityMap& disparity, float max_disparity);
inline constexpr std::array<std::array<std::uint8_t, 3>, 5> kColorStops{{
    {{0, 0, 143}}, {{0, 127, 255}}, {{127, 255, 127}}, {{255, 127, 0}}, {{143, 0, 0}}}};

/// [3, h, w] in [0, 1]; gray images are replicated to three channels.
template <typename T>
Tensor<T> image_to_tensor(const Image& image);

}  // namespace vitas
