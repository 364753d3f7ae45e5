#include "vitas/pfm.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "vitas/image_io.hpp"

namespace vitas {

namespace {

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<std::uint8_t>& b) : b_(b) {}

  /// Next whitespace-delimited token; consumes exactly one trailing whitespace byte.
  std::string token(const char* what) {
    while (pos_ < b_.size() && std::isspace(b_[pos_])) ++pos_;
    const auto start = pos_;
    while (pos_ < b_.size() && !std::isspace(b_[pos_])) ++pos_;
    if (start == pos_) throw PfmError(std::string("pfm: missing ") + what, start);
    if (pos_ >= b_.size()) throw PfmError("pfm: header truncated after " + std::string(what), pos_);
    std::string out(b_.begin() + static_cast<std::ptrdiff_t>(start), b_.begin() + static_cast<std::ptrdiff_t>(pos_));
    ++pos_;
    last_ = start;
    return out;
  }
  std::size_t last_start() const { return last_; }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0, last_ = 0;
};

std::int64_t parse_dim(const std::string& s, std::size_t offset, const char* what) {
  std::int64_t v = 0;
  for (char ch : s) {
    if (ch < '0' || ch > '9') throw PfmError(std::string("pfm: non-numeric ") + what + " '" + s + "'", offset);
    v = v * 10 + (ch - '0');
    if (v > (1 << 24)) throw PfmError(std::string("pfm: ") + what + " too large", offset);
  }
  if (v == 0) throw PfmError(std::string("pfm: ") + what + " must be positive", offset);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_pfm(const DisparityMap& map) {
  const std::string header = "Pf\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n-1.0\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + map.values.size() * 4);
  for (std::int64_t y = map.height - 1; y >= 0; --y) {
    for (std::int64_t x = 0; x < map.width; ++x) {
      const auto i = static_cast<std::size_t>(y * map.width + x);
      float v = map.values[i];
      if (!map.valid[i]) {
        v = std::numeric_limits<float>::infinity();
      } else if (!std::isfinite(v)) {
        throw std::invalid_argument("pfm: non-finite value at valid pixel (" + std::to_string(y) + ", " +
                                    std::to_string(x) + ")");
      }
      std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
      if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
      for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
    }
  }
  return out;
}

DisparityMap decode_pfm(const std::vector<std::uint8_t>& bytes) {
  HeaderReader r(bytes);
  const auto magic = r.token("magic");
  if (magic != "Pf") {
    if (magic == "PF") throw PfmError("pfm: three-channel PFM is not supported", r.last_start());
    throw PfmError("pfm: bad magic '" + magic + "'", r.last_start());
  }
  const auto ws = r.token("width");
  const auto w = parse_dim(ws, r.last_start(), "width");
  const auto hs = r.token("height");
  const auto h = parse_dim(hs, r.last_start(), "height");
  const auto ss = r.token("scale");
  double scale = 0.0;
  try {
    std::size_t used = 0;
    scale = std::stod(ss, &used);
    if (used != ss.size()) throw std::invalid_argument(ss);
  } catch (const std::exception&) {
    throw PfmError("pfm: bad scale '" + ss + "'", r.last_start());
  }
  if (scale == 0.0 || !std::isfinite(scale)) throw PfmError("pfm: scale must be finite and non-zero", r.last_start());
  const bool little = scale < 0;
  const auto payload = r.pos();
  const auto need = static_cast<std::size_t>(w * h * 4);
  if (bytes.size() - payload < need) {
    throw PfmError("pfm: truncated payload, need " + std::to_string(need) + " bytes, have " +
                       std::to_string(bytes.size() - payload),
                   bytes.size());
  }
  DisparityMap m(h, w);
  const bool swap = little != (std::endian::native == std::endian::little);
  std::size_t p = payload;
  for (std::int64_t y = h - 1; y >= 0; --y) {
    for (std::int64_t x = 0; x < w; ++x, p += 4) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, bytes.data() + p, 4);
      if (swap) bits = byteswap32(bits);
      const float v = std::bit_cast<float>(bits);
      const auto i = static_cast<std::size_t>(y * w + x);
      m.values[i] = v;
      m.valid[i] = std::isfinite(v) ? 1 : 0;
    }
  }
  return m;
}

void write_pfm(const std::string& path, const DisparityMap& map) {
  const auto bytes = encode_pfm(map);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

DisparityMap read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_pfm(bytes);
}

}  // namespace vitas
