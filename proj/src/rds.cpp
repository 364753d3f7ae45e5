#include "vitas/rds.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace vitas {

namespace {

class DotTexture {
 public:
  DotTexture(const RdsOptions& o, Rng& rng) : o_(o), rng_(rng) {}

  std::uint8_t dot() {
    if (unit_(rng_) >= o_.density) return 0;
    if (o_.binary) return 255;
    return static_cast<std::uint8_t>(1 + level_(rng_));
  }

  Image fill(std::int64_t w, std::int64_t h) {
    Image img(w, h, 1);
    const int s = o_.dot_size;
    for (std::int64_t by = 0; by < h; by += s)
      for (std::int64_t bx = 0; bx < w; bx += s) {
        const auto v = dot();
        for (std::int64_t y = by; y < std::min(h, by + s); ++y)
          for (std::int64_t x = bx; x < std::min(w, bx + s); ++x) img.at(y, x) = v;
      }
    return img;
  }

 private:
  const RdsOptions& o_;
  Rng& rng_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::uniform_int_distribution<int> level_{0, 254};
};

}  // namespace

StereoSample gen_rds(const RdsOptions& o) {
  if (o.width < 1 || o.height < 1) throw std::invalid_argument("gen_rds: image dims must be positive");
  if (o.d_max < 4 || 4 * o.d_max >= o.width) throw std::invalid_argument("gen_rds: need 4 <= d_max < width / 4");
  if (o.dot_size < 1) throw std::invalid_argument("gen_rds: dot_size must be >= 1");
  if (o.density < 0.0 || o.density > 1.0) throw std::invalid_argument("gen_rds: density must lie in [0, 1]");
  Rng rng(o.seed);
  auto pick = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  const auto w = o.width, h = o.height;

  const int d_bg = o.background_disparity.value_or(static_cast<int>(pick(0, 2)));
  const int d_fg = o.foreground_disparity.value_or(static_cast<int>(pick(4, o.d_max)));
  const bool ellipse = pick(0, 1) == 1;
  const auto fh = pick(std::max<std::int64_t>(1, h / 4), std::max<std::int64_t>(1, 3 * h / 4));
  const auto fw = pick(std::max<std::int64_t>(1, w / 6), std::max<std::int64_t>(1, w / 2));
  const auto y0 = pick(0, h - fh);
  const auto x0 = pick(std::min<std::int64_t>(o.d_max, w - fw), w - fw);

  std::vector<int> disp(static_cast<std::size_t>(w * h), d_bg);
  const double cy = y0 + fh / 2.0, cx = x0 + fw / 2.0;
  for (std::int64_t y = y0; y < y0 + fh; ++y) {
    for (std::int64_t x = x0; x < x0 + fw; ++x) {
      bool inside = true;
      if (ellipse) {
        const double ny = (y + 0.5 - cy) / (fh / 2.0), nx = (x + 0.5 - cx) / (fw / 2.0);
        inside = ny * ny + nx * nx <= 1.0;
      }
      if (inside) disp[static_cast<std::size_t>(y * w + x)] = d_fg;
    }
  }

  DotTexture tex(o, rng);
  StereoSample s;
  s.id = "rds-" + std::to_string(o.seed);
  s.left = tex.fill(w, h);
  s.right = tex.fill(w, h);  // fresh dots where nothing lands
  s.gt = DisparityMap(h, w);

  std::vector<int> depth(static_cast<std::size_t>(w * h), -1);
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      const int d = disp[static_cast<std::size_t>(y * w + x)];
      const auto xr = x - d;
      if (xr < 0) continue;
      auto& z = depth[static_cast<std::size_t>(y * w + xr)];
      z = std::max(z, d);
    }
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(y * w + x);
      const int d = disp[i];
      const auto xr = x - d;
      s.gt.values[i] = static_cast<float>(d);
      const bool visible = xr >= 0 && depth[static_cast<std::size_t>(y * w + xr)] == d;
      s.gt.valid[i] = visible ? 1 : 0;
      if (visible) s.right.at(y, xr) = s.left.at(y, x);
    }
  return s;
}

StereoSample gen_rds(std::int64_t width, std::int64_t height, int d_max, double density, std::uint64_t seed) {
  RdsOptions o;
  o.width = width;
  o.height = height;
  o.d_max = d_max;
  o.density = density;
  o.seed = seed;
  return gen_rds(o);
}

bool warp_identity_holds(const StereoSample& s) {
  const auto& gt = s.gt;
  for (std::int64_t y = 0; y < gt.height; ++y)
    for (std::int64_t x = 0; x < gt.width; ++x) {
      const auto i = static_cast<std::size_t>(y * gt.width + x);
      if (!gt.valid[i]) continue;
      const float d = gt.values[i];
      if (d != std::floor(d)) return false;
      const auto xr = x - static_cast<std::int64_t>(d);
      if (xr < 0 || s.left.at(y, x) != s.right.at(y, xr)) return false;
    }
  return true;
}

}  // namespace vitas
