#include "jnr/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>

#include "jnr/errors.hpp"

namespace jnr {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const std::filesystem::path& path, int height, int width,
               std::span<const std::uint8_t> planar) {
  const std::size_t plane = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  if (planar.size() != 3 * plane) {
    throw std::invalid_argument("write_png: pixel buffer does not match size");
  }
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  std::vector<png_byte> row(3 * static_cast<std::size_t>(width));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                            static_cast<std::size_t>(x);
      for (std::size_t c = 0; c < 3; ++c) row[3 * static_cast<std::size_t>(x) + c] = planar[c * plane + p];
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RgbImage read_png(const std::filesystem::path& path) {
  File f(std::fopen(path.c_str(), "rb"));
  if (!f) throw InputError("cannot open image " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  RgbImage img;
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("corrupt PNG " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  img.height = static_cast<int>(png_get_image_height(png, info));
  img.width = static_cast<int>(png_get_image_width(png, info));
  const std::size_t plane = static_cast<std::size_t>(img.height) * static_cast<std::size_t>(img.width);
  img.planar.resize(3 * plane);
  row.resize(png_get_rowbytes(png, info));
  for (int y = 0; y < img.height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < img.width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width) +
                            static_cast<std::size_t>(x);
      for (std::size_t c = 0; c < 3; ++c) img.planar[c * plane + p] = row[3 * static_cast<std::size_t>(x) + c];
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace jnr
