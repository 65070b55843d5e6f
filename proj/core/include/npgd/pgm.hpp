#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace npgd {

// Grayscale netpbm image. Samples are stored row-major; maxval <= 65535.
struct PgmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint16_t maxval = 255;
  std::vector<std::uint16_t> samples;
};

// Writes binary P5; 16-bit samples are big-endian as netpbm requires.
void write_pgm(const PgmImage& img, const std::filesystem::path& path);
// Reads P2 (ASCII) or P5 (binary), 8 or 16 bit.
PgmImage read_pgm(const std::filesystem::path& path);

}  // namespace npgd
