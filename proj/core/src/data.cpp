#include "npgd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "npgd/error.hpp"
#include "npgd/pgm.hpp"
#include "npgd/rng.hpp"

namespace npgd {

namespace fs = std::filesystem;

void PhantomSpec::validate() const {
  if (min_ellipses < 1 || max_ellipses < min_ellipses) {
    throw ConfigError("phantom_ellipses: need 1 <= min <= max");
  }
  if (!(intensity_lo > 0.0 && intensity_lo <= intensity_hi && intensity_hi <= 1.0)) {
    throw ConfigError("phantom_intensity: need 0 < lo <= hi <= 1");
  }
}

ComplexImage make_phantom(std::size_t height, std::size_t width, const PhantomSpec& spec, std::size_t index) {
  spec.validate();
  if (height == 0 || width == 0) throw DimensionError("phantom: empty image size");
  Xorshift64Star rng(Xorshift64Star::splitmix64(spec.seed) ^ (0xA24BAED4963EE407ULL * (index + 1)));

  struct Ellipse {
    double cu, cv, a, b, cos_t, sin_t, value;
  };
  const int n = spec.min_ellipses + int(rng.below(std::uint64_t(spec.max_ellipses - spec.min_ellipses + 1)));
  std::vector<Ellipse> ellipses;
  for (int k = 0; k < n; ++k) {
    Ellipse e;
    e.cu = rng.uniform(-0.5, 0.5);
    e.cv = rng.uniform(-0.5, 0.5);
    e.a = rng.uniform(0.1, 0.45);
    e.b = rng.uniform(0.1, 0.45);
    const double theta = rng.uniform(0.0, std::numbers::pi);
    e.cos_t = std::cos(theta);
    e.sin_t = std::sin(theta);
    e.value = rng.uniform(spec.intensity_lo, spec.intensity_hi);
    ellipses.push_back(e);
  }
  double ph[4] = {0, 0, 0, 0};
  if (spec.smooth_phase) {
    for (auto& c : ph) c = rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);
  }

  ComplexImage img(height, width);
  for (std::size_t i = 0; i < height; ++i) {
    const double v = 2.0 * (double(i) + 0.5) / double(height) - 1.0;
    for (std::size_t j = 0; j < width; ++j) {
      const double u = 2.0 * (double(j) + 0.5) / double(width) - 1.0;
      double m = 0.0;
      for (const auto& e : ellipses) {
        const double du = u - e.cu, dv = v - e.cv;
        const double p = (du * e.cos_t + dv * e.sin_t) / e.a;
        const double q = (-du * e.sin_t + dv * e.cos_t) / e.b;
        if (p * p + q * q <= 1.0) m += e.value;
      }
      m = std::clamp(m, 0.0, 1.0);
      const double phi = ph[0] + ph[1] * u + ph[2] * v + ph[3] * u * v;
      img.re(i, j) = float(m * std::cos(phi));
      img.im(i, j) = float(m * std::sin(phi));
    }
  }
  return img;
}

std::vector<ComplexImage> make_phantoms(std::size_t count, std::size_t height, std::size_t width,
                                        const PhantomSpec& spec) {
  if (count == 0) throw ParameterError("phantoms: empty dataset requested (count = 0)");
  std::vector<ComplexImage> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(make_phantom(height, width, spec, k));
  return out;
}

std::uint16_t encode_signed(float v) {
  const double c = std::round((double(v) + 1.0) * 32767.5);
  return std::uint16_t(std::clamp(c, 0.0, 65535.0));
}

float decode_signed(std::uint16_t code) { return float(double(code) / 32767.5 - 1.0); }

namespace {

PgmImage encode_plane(const ComplexImage& img, bool imag) {
  PgmImage p;
  p.width = img.width();
  p.height = img.height();
  p.maxval = 65535;
  p.samples.reserve(img.pixels());
  for (std::size_t i = 0; i < img.height(); ++i)
    for (std::size_t j = 0; j < img.width(); ++j) p.samples.push_back(encode_signed(imag ? img.im(i, j) : img.re(i, j)));
  return p;
}

fs::path with_suffix(const fs::path& base, const char* suffix) {
  fs::path p = base;
  p += suffix;
  return p;
}

ComplexImage grayscale(const PgmImage& p) {
  ComplexImage img(p.height, p.width);
  for (std::size_t i = 0; i < p.height; ++i)
    for (std::size_t j = 0; j < p.width; ++j) img.re(i, j) = float(double(p.samples[i * p.width + j]) / p.maxval);
  return img;
}

bool ends_with(const std::string& s, const std::string& tail) {
  return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

}  // namespace

void write_complex_pgm(const ComplexImage& img, const fs::path& base) {
  write_pgm(encode_plane(img, false), with_suffix(base, "_re.pgm"));
  write_pgm(encode_plane(img, true), with_suffix(base, "_im.pgm"));
}

ComplexImage read_complex_pgm(const fs::path& base) {
  const PgmImage re = read_pgm(with_suffix(base, "_re.pgm"));
  ComplexImage img(re.height, re.width);
  for (std::size_t k = 0; k < re.samples.size(); ++k) img.re(k / re.width, k % re.width) = decode_signed(re.samples[k]);
  const fs::path im_path = with_suffix(base, "_im.pgm");
  if (fs::exists(im_path)) {
    const PgmImage im = read_pgm(im_path);
    if (im.width != re.width || im.height != re.height) {
      throw FormatError(im_path.string() + ": size differs from the real part");
    }
    for (std::size_t k = 0; k < im.samples.size(); ++k) img.im(k / im.width, k % im.width) = decode_signed(im.samples[k]);
  }
  return img;
}

void write_magnitude_pgm(const ComplexImage& img, const fs::path& path, double peak) {
  if (!(peak > 0.0)) throw ParameterError("write_magnitude_pgm: peak must be positive");
  const Tensor mag = img.magnitude();
  PgmImage p;
  p.width = img.width();
  p.height = img.height();
  p.maxval = 65535;
  for (float m : mag.data()) p.samples.push_back(std::uint16_t(std::clamp(std::round(m / peak * 65535.0), 0.0, 65535.0)));
  write_pgm(p, path);
}

ComplexImage fit_to_size(const ComplexImage& img, std::size_t height, std::size_t width) {
  ComplexImage out(height, width);
  // offsets of the centered window in source and destination coordinates
  auto span = [](std::size_t src, std::size_t dst) {
    return src >= dst ? std::pair{(src - dst) / 2, std::size_t{0}} : std::pair{std::size_t{0}, (dst - src) / 2};
  };
  const auto [si, di] = span(img.height(), height);
  const auto [sj, dj] = span(img.width(), width);
  const std::size_t rows = std::min(img.height(), height), cols = std::min(img.width(), width);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      out.re(di + i, dj + j) = img.re(si + i, sj + j);
      out.im(di + i, dj + j) = img.im(si + i, sj + j);
    }
  }
  return out;
}

void write_dataset(const std::vector<ComplexImage>& images, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": " + ec.message());
  char name[32];
  for (std::size_t k = 0; k < images.size(); ++k) {
    std::snprintf(name, sizeof name, "img_%04zu", k);
    write_complex_pgm(images[k], dir / name);
  }
}

std::vector<ComplexImage> read_dataset(const fs::path& dir, std::size_t height, std::size_t width) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<ComplexImage> out;
  for (const auto& f : files) {
    const std::string stem = f.stem().string();
    if (ends_with(stem, "_im")) continue;
    if (ends_with(stem, "_re")) {
      out.push_back(fit_to_size(read_complex_pgm(f.parent_path() / stem.substr(0, stem.size() - 3)), height, width));
    } else {
      out.push_back(fit_to_size(grayscale(read_pgm(f)), height, width));
    }
  }
  if (out.empty()) throw ParameterError(dir.string() + ": no .pgm images found");
  return out;
}

}  // namespace npgd
