#ifndef JNR_PNG_IO_HPP_
#define JNR_PNG_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace jnr {

struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> planar;  // [3][height][width]
};

/// Writes 8-bit RGB. Throws std::runtime_error on IO failure.
void write_png(const std::filesystem::path& path, int height, int width,
               std::span<const std::uint8_t> planar);

/// Reads any 8-bit PNG and converts it to RGB. Throws InputError.
RgbImage read_png(const std::filesystem::path& path);

}  // namespace jnr

#endif  // JNR_PNG_IO_HPP_
