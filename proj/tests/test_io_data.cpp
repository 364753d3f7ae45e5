#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>

#include "test_util.hpp"
#include "vitas/image_io.hpp"
#include "vitas/pfm.hpp"
#include "vitas/rds.hpp"

using namespace vitas;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("vitas_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

void append_be(std::vector<std::uint8_t>& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int k = 3; k >= 0; --k) out.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
}

// Random finite float with arbitrary bit pattern (denormals, -0 included).
float random_finite(std::mt19937& rng) {
  for (;;) {
    const float v = std::bit_cast<float>(static_cast<std::uint32_t>(rng()));
    if (std::isfinite(v)) return v;
  }
}

}  // namespace

TEST_CASE("pfm round-trip is bit-exact") {
  std::mt19937 rng(1);
  std::uniform_int_distribution<int> dim(1, 9);
  for (int trial = 0; trial < 500; ++trial) {
    DisparityMap m(dim(rng), dim(rng));
    for (auto& v : m.values) v = random_finite(rng);
    auto back = decode_pfm(encode_pfm(m));
    REQUIRE(back.height == m.height);
    REQUIRE(back.width == m.width);
    CHECK(std::memcmp(back.values.data(), m.values.data(), m.values.size() * 4) == 0);
    CHECK(back.valid == m.valid);
  }
}

TEST_CASE("pfm header layout, row order and the 1x1 byte count") {
  DisparityMap m(1, 1, 0.0f);
  auto bytes = encode_pfm(m);
  CHECK(bytes.size() == 16);
  CHECK(std::string(bytes.begin(), bytes.begin() + 12) == "Pf\n1 1\n-1.0\n");

  DisparityMap two(2, 1);
  two.values = {1.0f, 2.0f};  // top row 1, bottom row 2
  auto b2 = encode_pfm(two);
  float first = 0;
  std::memcpy(&first, b2.data() + 12, 4);
  CHECK(first == 2.0f);
}

TEST_CASE("big-endian pfm fixture is byte-swapped on read") {
  auto bytes = bytes_of("Pf\n2 2\n1.0\n");
  // Bottom row first: (1,0)=3.5 (1,1)=-4, then top row (0,0)=1 (0,1)=0.25.
  for (float v : {3.5f, -4.0f, 1.0f, 0.25f}) append_be(bytes, v);
  auto m = decode_pfm(bytes);
  CHECK(m.height == 2);
  CHECK(m.width == 2);
  CHECK(m.at(0, 0) == 1.0f);
  CHECK(m.at(0, 1) == 0.25f);
  CHECK(m.at(1, 0) == 3.5f);
  CHECK(m.at(1, 1) == -4.0f);
  CHECK(m.valid_count() == 4);
}

TEST_CASE("invalid pixels are stored as +inf and read back invalid") {
  DisparityMap m(2, 2, 1.0f);
  m.valid[1] = 0;
  auto back = decode_pfm(encode_pfm(m));
  CHECK(back.valid == m.valid);
  CHECK(std::isinf(back.values[1]));
  m.values[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(encode_pfm(m), std::invalid_argument);
}

TEST_CASE("pfm parse errors report the byte offset") {
  auto expect_offset = [](const std::string& text, std::size_t offset) {
    try {
      decode_pfm(bytes_of(text));
      FAIL("no error for " << text);
    } catch (const PfmError& e) {
      CHECK(e.offset() == offset);
    }
  };
  expect_offset("PX\n1 1\n-1.0\n0000", 0);
  expect_offset("Pf\n1 x\n-1.0\n0000", 5);
  expect_offset("Pf\n1 1\nabc\n0000", 7);
  expect_offset("Pf\n2 2\n-1.0\n0000", 16);
  expect_offset("Pf\n0 1\n-1.0\n", 3);
}

TEST_CASE("pfm, pgm and png files round-trip on disk") {
  auto dir = scratch_dir("io");
  DisparityMap m(3, 4, 2.5f);
  write_pfm((dir / "a.pfm").string(), m);
  auto back = read_pfm((dir / "a.pfm").string());
  CHECK(back.values == m.values);

  Image gray(5, 3, 1);
  for (std::size_t i = 0; i < gray.data.size(); ++i) gray.data[i] = static_cast<std::uint8_t>(i * 17);
  write_image((dir / "g.pgm").string(), gray);
  write_image((dir / "g.png").string(), gray);
  CHECK(read_image((dir / "g.pgm").string()) == gray);
  CHECK(read_image((dir / "g.png").string()) == gray);

  Image rgb(4, 2, 3);
  for (std::size_t i = 0; i < rgb.data.size(); ++i) rgb.data[i] = static_cast<std::uint8_t>(255 - i * 9);
  write_png((dir / "c.png").string(), rgb);
  CHECK(read_png((dir / "c.png").string()) == rgb);

  CHECK_THROWS_AS(read_image((dir / "missing.png").string()), IoError);
  CHECK_THROWS_AS(write_pgm((dir / "c.pgm").string(), rgb), IoError);
}

TEST_CASE("colorize follows the five stops and blacks out invalid pixels") {
  DisparityMap m(1, 4);
  m.values = {0.0f, 8.0f, 16.0f, 4.0f};
  m.valid = {1, 1, 1, 0};
  auto img = colorize(m, 16.0f);
  CHECK(img.channels == 3);
  for (int c = 0; c < 3; ++c) {
    CHECK(img.at(0, 0, c) == kColorStops[0][c]);
    CHECK(img.at(0, 1, c) == kColorStops[2][c]);
    CHECK(img.at(0, 2, c) == kColorStops[4][c]);
    CHECK(img.at(0, 3, c) == 0);
  }
}

TEST_CASE("image_to_tensor replicates gray into three channels in [0, 1]") {
  Image g(2, 1, 1);
  g.data = {0, 255};
  auto t = image_to_tensor<float>(g);
  CHECK(t.shape() == Shape{3, 1, 2});
  for (std::int64_t c = 0; c < 3; ++c) {
    CHECK(t.at({c, 0, 0}) == 0.0f);
    CHECK(t.at({c, 0, 1}) == 1.0f);
  }
}

TEST_CASE("gen_rds is deterministic in its seed") {
  auto a = gen_rds(128, 64, 16, 0.5, 42), b = gen_rds(128, 64, 16, 0.5, 42), c = gen_rds(128, 64, 16, 0.5, 43);
  CHECK(a.left == b.left);
  CHECK(a.right == b.right);
  CHECK(a.gt.values == b.gt.values);
  CHECK(a.gt.valid == b.gt.valid);
  CHECK_FALSE(a.left == c.left);
}

TEST_CASE("null disparity gives identical views and an all-zero gt") {
  RdsOptions o;
  o.seed = 5;
  o.foreground_disparity = 0;
  o.background_disparity = 0;
  auto s = gen_rds(o);
  CHECK(s.left == s.right);
  for (auto v : s.gt.values) CHECK(v == 0.0f);
  CHECK(s.gt.valid_count() == s.gt.height * s.gt.width);
}

TEST_CASE("warp identity holds and disparities stay in range") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    RdsOptions o;
    o.seed = seed;
    o.binary = seed % 2 == 0;
    o.dot_size = 1 + static_cast<int>(seed % 3);
    o.density = 0.3 + 0.01 * static_cast<double>(seed);
    auto s = gen_rds(o);
    CHECK(warp_identity_holds(s));
    CHECK(s.left.width == 128);
    CHECK(s.left.height == 64);
    bool has_fg = false;
    for (std::size_t i = 0; i < s.gt.values.size(); ++i) {
      const float d = s.gt.values[i];
      CHECK(((d >= 0 && d <= 2) || (d >= 4 && d <= 16)));
      has_fg = has_fg || d >= 4;
    }
    CHECK(has_fg);
    CHECK(s.gt.valid_count() > s.gt.height * s.gt.width / 2);
  }
}

TEST_CASE("gen_rds validates its options") {
  CHECK_THROWS_AS(gen_rds(64, 32, 16, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(gen_rds(128, 64, 2, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(gen_rds(128, 64, 16, 1.5, 0), std::invalid_argument);
}
