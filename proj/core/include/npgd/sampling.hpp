#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace npgd {

// Boolean k-space sampling pattern. Bits are held in the native FFT layout
// (DC at (0,0)); the on-disk formats use the centered layout with DC at
// (H/2, W/2).
class SamplingMask {
 public:
  SamplingMask() = default;
  SamplingMask(std::size_t height, std::size_t width, bool fill = false);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t count() const;

  bool sampled(std::size_t i, std::size_t j) const { return bits_[i * width_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v) { bits_[i * width_ + j] = v ? 1 : 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  // Generation parameters; zero for masks that were imported or hand-built.
  double rate = 0.0;
  double center_fraction = 0.0;
  double decay = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const SamplingMask& a, const SamplingMask& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.bits_ == b.bits_;
  }

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct VarDensParams {
  double rate = 0.2;
  double center_fraction = 0.04;
  double decay = 3.0;
  std::uint64_t seed = 1;
};

// Side of the always-sampled low-frequency square.
std::size_t center_square_side(std::size_t height, std::size_t width, double center_fraction);

// Centered frequency index of FFT-layout row/column i in a length-n axis:
// (i + n/2) mod n, so that DC maps to n/2.
inline std::size_t centered_index(std::size_t i, std::size_t n) { return (i + n / 2) % n; }

// Variable-density mask: the center square is always sampled, the remaining
// quota round(rate*H*W) is drawn without replacement with weight
// (1 - r)^decay, r the normalized radius of the centered frequency.
SamplingMask generate_vardens_mask(std::size_t height, std::size_t width, const VarDensParams& params);

// PGM P5 (maxval 255, 255 = sampled), centered layout.
void write_mask_pgm(const SamplingMask& mask, const std::filesystem::path& path);
SamplingMask read_mask_pgm(const std::filesystem::path& path);

// "NPGDMASK", u32 H, u32 W (little-endian), ceil(HW/8) bytes, row-major
// MSB-first, centered layout.
void write_mask_bits(const SamplingMask& mask, const std::filesystem::path& path);
SamplingMask read_mask_bits(const std::filesystem::path& path);

}  // namespace npgd
