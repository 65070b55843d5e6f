#include "npgd/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "npgd/error.hpp"
#include "npgd/fft.hpp"
#include "npgd/pgm.hpp"
#include "npgd/rng.hpp"

namespace npgd {

SamplingMask::SamplingMask(std::size_t height, std::size_t width, bool fill)
    : height_(height), width_(width), bits_(height * width, fill ? 1 : 0) {}

std::size_t SamplingMask::count() const {
  return std::size_t(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::size_t center_square_side(std::size_t height, std::size_t width, double center_fraction) {
  const auto side = std::size_t(std::llround(std::sqrt(center_fraction * double(height * width))));
  return std::min({side, height, width});
}

SamplingMask generate_vardens_mask(std::size_t height, std::size_t width, const VarDensParams& p) {
  if (!is_power_of_two(height)) throw DimensionError("mask height " + std::to_string(height) + " is not a power of two");
  if (!is_power_of_two(width)) throw DimensionError("mask width " + std::to_string(width) + " is not a power of two");
  if (!(p.rate > 0.0 && p.rate <= 1.0)) throw ParameterError("sampling rate must lie in (0, 1]");
  if (!(p.center_fraction >= 0.0 && p.center_fraction < p.rate)) {
    throw ParameterError("center fraction must lie in [0, rate)");
  }
  if (!(p.decay >= 0.0)) throw ParameterError("density decay must be non-negative");

  const std::size_t total = height * width;
  const auto quota = std::size_t(std::llround(p.rate * double(total)));
  const std::size_t side = center_square_side(height, width, p.center_fraction);
  if (side * side > quota) throw ParameterError("center square exceeds the sampling quota");

  // Centered coordinates: row cu, column cv, DC at (H/2, W/2).
  const std::size_t c0 = height / 2 - side / 2;
  const std::size_t r0 = width / 2 - side / 2;
  auto in_center = [&](std::size_t cu, std::size_t cv) {
    return cu >= c0 && cu < c0 + side && cv >= r0 && cv < r0 + side;
  };

  SamplingMask mask(height, width);
  mask.rate = p.rate;
  mask.center_fraction = p.center_fraction;
  mask.decay = p.decay;
  mask.seed = p.seed;

  // FFT-layout index of a centered coordinate.
  auto native = [&](std::size_t cu, std::size_t cv) {
    return std::pair{(cu + height - height / 2) % height, (cv + width - width / 2) % width};
  };

  struct Candidate {
    double key;
    std::size_t cu, cv;
  };
  std::vector<Candidate> cand;
  cand.reserve(total);
  const double hh = double(height) / 2.0, hw = double(width) / 2.0;
  const double rmax = std::sqrt(hh * hh + hw * hw);
  Xorshift64Star rng(p.seed);
  for (std::size_t cu = 0; cu < height; ++cu) {
    for (std::size_t cv = 0; cv < width; ++cv) {
      if (in_center(cu, cv)) {
        const auto [i, j] = native(cu, cv);
        mask.set(i, j, true);
        continue;
      }
      const double u = double(cu) - hh, v = double(cv) - hw;
      const double r = std::min(1.0, std::sqrt(u * u + v * v) / rmax);
      const double w = std::max(std::pow(1.0 - r, p.decay), 1e-12);
      // Efraimidis-Spirakis key: the largest log(U)/w are a weighted sample
      // without replacement.
      const double uni = 1.0 - rng.uniform();
      cand.push_back({std::log(uni) / w, cu, cv});
    }
  }

  const std::size_t remaining = quota - side * side;
  std::partial_sort(cand.begin(), cand.begin() + std::ptrdiff_t(remaining), cand.end(),
                    [](const Candidate& a, const Candidate& b) {
                      if (a.key != b.key) return a.key > b.key;
                      return a.cu != b.cu ? a.cu < b.cu : a.cv < b.cv;
                    });
  for (std::size_t k = 0; k < remaining; ++k) {
    const auto [i, j] = native(cand[k].cu, cand[k].cv);
    mask.set(i, j, true);
  }
  return mask;
}

namespace {

// Centered-layout bit at centered coordinate (cu, cv).
bool centered_bit(const SamplingMask& m, std::size_t cu, std::size_t cv) {
  const std::size_t i = (cu + m.height() - m.height() / 2) % m.height();
  const std::size_t j = (cv + m.width() - m.width() / 2) % m.width();
  return m.sampled(i, j);
}

void set_centered(SamplingMask& m, std::size_t cu, std::size_t cv, bool v) {
  const std::size_t i = (cu + m.height() - m.height() / 2) % m.height();
  const std::size_t j = (cv + m.width() - m.width() / 2) % m.width();
  m.set(i, j, v);
}

void put_u32(std::string& buf, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) buf.push_back(char((v >> (8 * k)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

constexpr char kMaskMagic[8] = {'N', 'P', 'G', 'D', 'M', 'A', 'S', 'K'};

}  // namespace

void write_mask_pgm(const SamplingMask& mask, const std::filesystem::path& path) {
  PgmImage img;
  img.width = mask.width();
  img.height = mask.height();
  img.maxval = 255;
  img.samples.resize(mask.height() * mask.width());
  for (std::size_t cu = 0; cu < mask.height(); ++cu)
    for (std::size_t cv = 0; cv < mask.width(); ++cv)
      img.samples[cu * mask.width() + cv] = centered_bit(mask, cu, cv) ? 255 : 0;
  write_pgm(img, path);
}

SamplingMask read_mask_pgm(const std::filesystem::path& path) {
  const PgmImage img = read_pgm(path);
  SamplingMask mask(img.height, img.width);
  for (std::size_t cu = 0; cu < img.height; ++cu) {
    for (std::size_t cv = 0; cv < img.width; ++cv) {
      const auto s = img.samples[cu * img.width + cv];
      if (s != 0 && s != img.maxval) throw FormatError("mask PGM must be binary (0 or maxval): " + path.string());
      set_centered(mask, cu, cv, s != 0);
    }
  }
  return mask;
}

void write_mask_bits(const SamplingMask& mask, const std::filesystem::path& path) {
  std::string buf(kMaskMagic, sizeof kMaskMagic);
  put_u32(buf, std::uint32_t(mask.height()));
  put_u32(buf, std::uint32_t(mask.width()));
  const std::size_t n = mask.height() * mask.width();
  std::string bytes((n + 7) / 8, '\0');
  for (std::size_t cu = 0; cu < mask.height(); ++cu) {
    for (std::size_t cv = 0; cv < mask.width(); ++cv) {
      const std::size_t k = cu * mask.width() + cv;
      if (centered_bit(mask, cu, cv)) bytes[k / 8] = char(std::uint8_t(bytes[k / 8]) | (0x80u >> (k % 8)));
    }
  }
  buf += bytes;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(buf.data(), std::streamsize(buf.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

SamplingMask read_mask_bits(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < 16 || !std::equal(kMaskMagic, kMaskMagic + 8, buf.begin())) {
    throw FormatError(path.string() + " is not an NPGDMASK file");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  const std::size_t h = get_u32(p + 8), w = get_u32(p + 12);
  if (h == 0 || w == 0) throw FormatError("mask file has an empty dimension");
  const std::size_t n = h * w;
  if (buf.size() != 16 + (n + 7) / 8) throw CorruptionError("mask file size does not match its header");
  SamplingMask mask(h, w);
  for (std::size_t cu = 0; cu < h; ++cu) {
    for (std::size_t cv = 0; cv < w; ++cv) {
      const std::size_t k = cu * w + cv;
      set_centered(mask, cu, cv, (p[16 + k / 8] >> (7 - k % 8)) & 1u);
    }
  }
  return mask;
}

}  // namespace npgd
