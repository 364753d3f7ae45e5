#pragma once

#include <cstdint>
#include <vector>

namespace vitas {

/// Per-pixel horizontal disparity in pixels, row-major [height, width].
struct DisparityMap {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> valid;  // 1 where values are meaningful

  DisparityMap() = default;
  DisparityMap(std::int64_t h, std::int64_t w, float fill = 0.0f)
      : height(h), width(w), values(static_cast<std::size_t>(h * w), fill), valid(static_cast<std::size_t>(h * w), 1) {}

  float& at(std::int64_t y, std::int64_t x) { return values[static_cast<std::size_t>(y * width + x)]; }
  float at(std::int64_t y, std::int64_t x) const { return values[static_cast<std::size_t>(y * width + x)]; }
  std::int64_t valid_count() const;
};

inline std::int64_t DisparityMap::valid_count() const {
  std::int64_t n = 0;
  for (auto v : valid) n += v ? 1 : 0;
  return n;
}

}  // namespace vitas
