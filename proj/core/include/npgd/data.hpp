#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "npgd/tensor.hpp"

namespace npgd {

// Random ellipse phantoms standing in for real scans.
struct PhantomSpec {
  int min_ellipses = 3;
  int max_ellipses = 8;
  double intensity_lo = 0.1;
  double intensity_hi = 0.6;
  // Multiply by exp(i phi) with phi a random low-order polynomial.
  bool smooth_phase = false;
  std::uint64_t seed = 1;

  void validate() const;
};

// Image `index` of the phantom stream for `spec`; magnitude in [0, 1].
ComplexImage make_phantom(std::size_t height, std::size_t width, const PhantomSpec& spec, std::size_t index);
// Throws ParameterError for count == 0.
std::vector<ComplexImage> make_phantoms(std::size_t count, std::size_t height, std::size_t width,
                                        const PhantomSpec& spec);

// Signed 16-bit code for values in [-1, 1]: round((v + 1) * 32767.5),
// clamped to [0, 65535]. Decoding is code / 32767.5 - 1.
std::uint16_t encode_signed(float v);
float decode_signed(std::uint16_t code);

// Writes <base>_re.pgm and <base>_im.pgm.
void write_complex_pgm(const ComplexImage& img, const std::filesystem::path& base);
// Reads <base>_re.pgm and, if present, <base>_im.pgm (zero otherwise).
ComplexImage read_complex_pgm(const std::filesystem::path& base);

// Magnitude as 16-bit PGM scaled so that `peak` maps to 65535.
void write_magnitude_pgm(const ComplexImage& img, const std::filesystem::path& path, double peak = 1.0);

// Center crop / zero pad to height x width.
ComplexImage fit_to_size(const ComplexImage& img, std::size_t height, std::size_t width);

// img_0000_re.pgm / img_0000_im.pgm, ...
void write_dataset(const std::vector<ComplexImage>& images, const std::filesystem::path& dir);

// Loads every image in `dir`, sorted by file name. <name>_re.pgm (+ _im)
// pairs are decoded with the signed mapping; any other .pgm is taken as a
// grayscale magnitude scaled by its maxval. Images are fitted to
// height x width. Throws IoError for a missing directory and ParameterError
// when nothing was found.
std::vector<ComplexImage> read_dataset(const std::filesystem::path& dir, std::size_t height, std::size_t width);

}  // namespace npgd
