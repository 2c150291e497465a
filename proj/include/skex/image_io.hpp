#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "skex/error.hpp"
#include "skex/imaging.hpp"

namespace skex {

struct Gray8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

inline Gray8 to_gray8(const GrayImage& img) {
  Gray8 g{img.width, img.height, std::vector<std::uint8_t>(img.pixels.size())};
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    g.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.pixels[i], 0.0f, 1.0f) * 255.0f));
  return g;
}

inline Gray8 to_gray8(const EdgeMap& e) {
  Gray8 g{e.width, e.height, std::vector<std::uint8_t>(e.mask.size())};
  for (std::size_t i = 0; i < e.mask.size(); ++i) g.pixels[i] = e.mask[i] ? 255 : 0;
  return g;
}

inline GrayImage to_float(const Gray8& g) {
  GrayImage img(g.width, g.height);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) img.pixels[i] = g.pixels[i] / 255.0f;
  return img;
}

// ---------------------------------------------------------------------------
// PGM (binary P5, maxval 255)

inline void write_pgm(const std::filesystem::path& path, const Gray8& g) {
  std::ofstream os(path, std::ios::binary);
  os << "P5\n" << g.width << ' ' << g.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(g.pixels.data()), static_cast<std::streamsize>(g.pixels.size()));
  if (!os) throw IoError("failed to write " + path.string());
}

inline Gray8 read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    char c;
    while (is.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(is, skip);
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
      } else {
        t += c;
      }
    }
    return t;
  };
  if (token() != "P5") throw SchemaError(path.string() + ": not a binary PGM");
  Gray8 g;
  g.width = std::stoi(token());
  g.height = std::stoi(token());
  if (std::stoi(token()) != 255) throw SchemaError(path.string() + ": only 8-bit PGM is supported");
  g.pixels.resize(static_cast<std::size_t>(g.width) * g.height);
  if (!is.read(reinterpret_cast<char*>(g.pixels.data()), static_cast<std::streamsize>(g.pixels.size())))
    throw SchemaError(path.string() + ": truncated PGM");
  return g;
}

// ---------------------------------------------------------------------------
// PNG (8-bit grayscale)

namespace detail {
struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace detail

inline void write_png(const std::filesystem::path& path, const Gray8& g) {
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(g.width), static_cast<png_uint_32>(g.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < g.height; ++y)
    png_write_row(png, g.pixels.data() + static_cast<std::size_t>(y) * g.width);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline Gray8 read_png(const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialization failed");
  }
  Gray8 g;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw SchemaError("failed to decode " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  // Normalize every variant to 8-bit gray.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_palette_to_rgb(png);
  const auto ct = png_get_color_type(png, info);
  if (ct == PNG_COLOR_TYPE_RGB || ct == PNG_COLOR_TYPE_RGB_ALPHA || ct == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);
  g.width = static_cast<int>(png_get_image_width(png, info));
  g.height = static_cast<int>(png_get_image_height(png, info));
  g.pixels.resize(static_cast<std::size_t>(g.width) * g.height);
  for (int y = 0; y < g.height; ++y) png_read_row(png, g.pixels.data() + static_cast<std::size_t>(y) * g.width, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return g;
}

// Picks the codec from the extension (.pgm or .png).
inline Gray8 read_image(const std::filesystem::path& path) {
  return path.extension() == ".pgm" ? read_pgm(path) : read_png(path);
}

inline void write_image(const std::filesystem::path& path, const Gray8& g) {
  if (path.extension() == ".pgm")
    write_pgm(path, g);
  else
    write_png(path, g);
}

}  // namespace skex
