#include "vitas/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace vitas {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path);
  return f;
}

std::string extension(const std::string& path) {
  const auto dot = path.rfind('.');
  if (dot == std::string::npos) return {};
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw IoError(path + ": not a binary PGM (P5)");
  auto next_int = [&](const char* what) {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      in >> std::ws;
    }
    long long v = 0;
    if (!(in >> v) || v <= 0) throw IoError(path + ": bad PGM " + std::string(what));
    return v;
  };
  const auto w = next_int("width"), h = next_int("height"), maxval = next_int("maxval");
  if (maxval > 255) throw IoError(path + ": only 8-bit PGM is supported");
  in.get();
  Image img(w, h, 1);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size())) throw IoError(path + ": truncated PGM payload");
  return img;
}

void write_pgm(const std::string& path, const Image& image) {
  if (image.channels != 1) throw IoError("write_pgm: image must be single-channel");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data.data()), static_cast<std::streamsize>(image.data.size()));
  if (!out) throw IoError("write failed: " + path);
}

Image read_png(const std::string& path) {
  auto f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path + ": invalid PNG");
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const auto w = static_cast<std::int64_t>(png_get_image_width(png, info));
  const auto h = static_cast<std::int64_t>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path + ": unsupported PNG channel count");
  }
  Image img(w, h, channels);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (std::int64_t y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = img.data.data() + y * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::string& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw IoError("write_png: channels must be 1 or 3");
  auto f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("write failed: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::int64_t y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.data.data() + y * image.width * image.channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char sig[8] = {};
  in.read(sig, 8);
  if (in.gcount() >= 2 && sig[0] == 'P' && sig[1] == '5') return read_pgm(path);
  if (in.gcount() == 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(sig), 0, 8) == 0) return read_png(path);
  throw IoError(path + ": unrecognized image format (expected PGM P5 or PNG)");
}

void write_image(const std::string& path, const Image& image) {
  const auto ext = extension(path);
  if (ext == "png") return write_png(path, image);
  if (ext == "pgm") return write_pgm(path, image);
  throw IoError(path + ": unsupported image extension");
}

Image colorize(const DisparityMap& disparity, float max_disparity) {
  Image out(disparity.width, disparity.height, 3);
  const float scale = max_disparity > 0 ? 1.0f / max_disparity : 0.0f;
  for (std::int64_t y = 0; y < disparity.height; ++y) {
    for (std::int64_t x = 0; x < disparity.width; ++x) {
      const auto i = static_cast<std::size_t>(y * disparity.width + x);
      if (!disparity.valid[i] || !std::isfinite(disparity.values[i])) continue;
      const float t = std::clamp(disparity.values[i] * scale, 0.0f, 1.0f) * 4.0f;
      const int k = std::min(3, static_cast<int>(t));
      const float f = t - static_cast<float>(k);
      for (int c = 0; c < 3; ++c) {
        const float a = kColorStops[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)];
        const float b = kColorStops[static_cast<std::size_t>(k + 1)][static_cast<std::size_t>(c)];
        out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(a + (b - a) * f));
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> image_to_tensor(const Image& image) {
  const auto h = image.height, w = image.width, plane = h * w;
  std::vector<T> v(static_cast<std::size_t>(3 * plane));
  for (int c = 0; c < 3; ++c) {
    const int src = image.channels == 1 ? 0 : c;
    for (std::int64_t i = 0; i < plane; ++i) {
      v[static_cast<std::size_t>(c * plane + i)] =
          static_cast<T>(image.data[static_cast<std::size_t>(i * image.channels + src)]) / T(255);
    }
  }
  return Tensor<T>({3, h, w}, std::move(v));
}

template Tensor<float> image_to_tensor<float>(const Image&);
template Tensor<double> image_to_tensor<double>(const Image&);

}  // namespace vitas
