#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vitas/disparity.hpp"

namespace vitas {

class PfmError : public std::runtime_error {
 public:
  PfmError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Single-channel PFM: "Pf\n<w> <h>\n-1.0\n" then little-endian float32 rows
/// from bottom to top. Invalid pixels are stored as +inf; valid values must be
/// finite.
std::vector<std::uint8_t> encode_pfm(const DisparityMap& map);
/// Accepts either scale sign (negative: little-endian, positive: big-endian).
/// Non-finite values decode as invalid pixels.
DisparityMap decode_pfm(const std::vector<std::uint8_t>& bytes);

void write_pfm(const std::string& path, const DisparityMap& map);
DisparityMap read_pfm(const std::string& path);

}  // namespace vitas
