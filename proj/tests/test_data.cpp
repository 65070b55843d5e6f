#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "npgd/data.hpp"
#include "npgd/error.hpp"
#include "test_util.hpp"

using namespace npgd;
using namespace npgd::testing;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("npgd_data_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Phantom, MagnitudeInUnitRangeAndDeterministic) {
  PhantomSpec spec;
  spec.seed = 7;
  for (std::size_t k = 0; k < 10; ++k) {
    const ComplexImage a = make_phantom(32, 32, spec, k);
    EXPECT_EQ(a, make_phantom(32, 32, spec, k));
    const Tensor m = a.magnitude();
    for (float v : m.data()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f + 1e-6f);
    }
    EXPECT_GT(norm(a), 0.0);
  }
  EXPECT_FALSE(make_phantom(32, 32, spec, 0) == make_phantom(32, 32, spec, 1));
  spec.seed = 8;
  PhantomSpec other;
  other.seed = 7;
  EXPECT_FALSE(make_phantom(32, 32, spec, 0) == make_phantom(32, 32, other, 0));
}

TEST(Phantom, SmoothPhaseKeepsMagnitude) {
  PhantomSpec a, b;
  b.smooth_phase = true;
  const ComplexImage x = make_phantom(16, 16, a, 3), y = make_phantom(16, 16, b, 3);
  EXPECT_GT(norm(y.imag_part()), 0.0);
  EXPECT_LT(max_abs_diff(x.magnitude(), y.magnitude()), 1e-5);
}

TEST(Phantom, InvalidSpecsAndEmptyStream) {
  PhantomSpec s;
  EXPECT_THROW(make_phantoms(0, 16, 16, s), ParameterError);
  s.min_ellipses = 9;
  EXPECT_THROW(s.validate(), ConfigError);
  s = PhantomSpec{};
  s.intensity_hi = 1.5;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Pgm, SignedCodes) {
  EXPECT_EQ(encode_signed(-1.0f), 0u);
  EXPECT_EQ(encode_signed(1.0f), 65535u);
  EXPECT_EQ(encode_signed(5.0f), 65535u);
  Xorshift64Star rng(91);
  for (int k = 0; k < 1000; ++k) {
    const float v = float(2.0 * rng.uniform() - 1.0);
    EXPECT_NEAR(decode_signed(encode_signed(v)), v, 0.5 / 32767.5 + 1e-7);
  }
}

TEST(Pgm, ComplexRoundTripAndMissingImaginary) {
  const fs::path dir = fresh_dir("pgm");
  Xorshift64Star rng(92);
  ComplexImage x = random_image(rng, 8, 16, 0.3);
  for (auto& v : x.planes().data()) v = std::clamp(v, -1.0f, 1.0f);
  write_complex_pgm(x, dir / "a");
  EXPECT_LT(max_abs_diff(read_complex_pgm(dir / "a"), x), 1.0 / 32767.5);
  fs::remove(dir / "a_im.pgm");
  const ComplexImage re_only = read_complex_pgm(dir / "a");
  EXPECT_EQ(norm(re_only.imag_part()), 0.0);
  EXPECT_THROW(read_complex_pgm(dir / "missing"), IoError);
  fs::remove_all(dir);
}

TEST(Pgm, FitToSizeCropsAndPads) {
  ComplexImage x(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) x.re(i, j) = float(i * 4 + j);
  const ComplexImage c = fit_to_size(x, 2, 2);
  EXPECT_EQ(c.re(0, 0), 5.0f);
  EXPECT_EQ(c.re(1, 1), 10.0f);
  const ComplexImage p = fit_to_size(x, 8, 8);
  EXPECT_EQ(p.re(2, 2), 0.0f);
  EXPECT_EQ(p.re(0, 0), 0.0f);
  EXPECT_EQ(norm(p), norm(x));
}

TEST(Dataset, WriteReadRoundTripSorted) {
  const fs::path dir = fresh_dir("ds");
  PhantomSpec s;
  s.smooth_phase = true;
  const auto images = make_phantoms(3, 16, 16, s);
  write_dataset(images, dir);
  EXPECT_TRUE(fs::exists(dir / "img_0000_re.pgm"));
  EXPECT_TRUE(fs::exists(dir / "img_0002_im.pgm"));
  const auto back = read_dataset(dir, 16, 16);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_LT(max_abs_diff(back[k], images[k]), 1.0 / 32767.5);
  fs::remove_all(dir);
}

TEST(Dataset, GrayscaleIngestionAndErrors) {
  const fs::path dir = fresh_dir("gray");
  {
    std::ofstream f(dir / "scan.pgm", std::ios::binary);
    f << "P2\n4 4\n255\n";
    for (int k = 0; k < 16; ++k) f << (k % 2 ? 255 : 0) << ' ';
  }
  const auto imgs = read_dataset(dir, 8, 8);
  ASSERT_EQ(imgs.size(), 1u);
  EXPECT_FLOAT_EQ(imgs[0].re(2, 3), 1.0f);
  EXPECT_FLOAT_EQ(imgs[0].re(0, 0), 0.0f);
  EXPECT_THROW(read_dataset(dir / "nope", 8, 8), IoError);
  const fs::path empty = fresh_dir("empty");
  EXPECT_THROW(read_dataset(empty, 8, 8), ParameterError);
  fs::remove_all(dir);
  fs::remove_all(empty);
}
