#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "sspix/feature_dump.hpp"
#include "sspix/image.hpp"
#include "sspix/png_io.hpp"

using namespace sspix;
using namespace sspix::test;

namespace {

// Reference sRGB(D65) -> CIELAB conversion written directly from the
// colorimetry definitions, kept independent of the library code path.
void oracle_rgb_to_lab(real r, real g, real b, real out[3]) {
  auto linear = [](real u) { return u <= 0.04045 ? u / 12.92 : std::pow((u + 0.055) / 1.055, 2.4); };
  real rl = linear(r), gl = linear(g), bl = linear(b);
  real x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
  real y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
  real z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
  x /= 0.95047;
  z /= 1.08883;
  auto f = [](real t) {
    return t > 0.008856451679035631 ? std::cbrt(t) : (903.2962962962963 * t + 16.0) / 116.0;
  };
  real fx = f(x), fy = f(y), fz = f(z);
  out[0] = 116.0 * fy - 16.0;
  out[1] = 500.0 * (fx - fy);
  out[2] = 200.0 * (fy - fz);
}

Tensor rgb_tensor(real r, real g, real b) {
  Tensor t(std::vector<int>{3, 1, 1});
  t[0] = r;
  t[1] = g;
  t[2] = b;
  return t;
}

}  // namespace

TEST_CASE("Lab conversion matches the colorimetric definition") {
  struct Case {
    real r, g, b;
  } cases[] = {{0, 0, 0}, {1, 1, 1}, {0.5, 0.5, 0.5}, {1, 0, 0}, {0, 1, 0},
               {0, 0, 1}, {0.25, 0.6, 0.9}};
  for (const auto& cs : cases) {
    Tensor lab = rgb_to_lab(rgb_tensor(cs.r, cs.g, cs.b));
    real want[3];
    oracle_rgb_to_lab(cs.r, cs.g, cs.b, want);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(lab[i] - want[i]) < 0.1);
  }

  // black and white pin the L axis
  Tensor black = rgb_to_lab(rgb_tensor(0, 0, 0));
  CHECK(std::abs(black[0]) < 1e-6);
  CHECK(std::abs(black[1]) < 1e-6);
  CHECK(std::abs(black[2]) < 1e-6);
  // the sRGB matrix rows sum to 1.0000001, so white lands a hair above L=100
  Tensor white = rgb_to_lab(rgb_tensor(1, 1, 1));
  CHECK(std::abs(white[0] - 100.0) < 1e-4);
  CHECK(std::abs(white[1]) < 1e-4);
  CHECK(std::abs(white[2]) < 1e-4);
}

TEST_CASE("Lab round trip returns near-identical colors") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<real> u(0.0, 1.0);
  const int n = 1000;
  Tensor rgb(std::vector<int>{3, 1, n});
  for (int i = 0; i < 3 * n; ++i) rgb[i] = u(rng);

  Tensor back = lab_to_rgb(rgb_to_lab(rgb));
  Tensor lab1 = rgb_to_lab(rgb), lab2 = rgb_to_lab(back);
  for (int i = 0; i < n; ++i) {
    real de = 0;
    for (int c = 0; c < 3; ++c) {
      real d = lab1[c * n + i] - lab2[c * n + i];
      de += d * d;
    }
    CHECK(std::sqrt(de) < 0.5);
  }
}

TEST_CASE("rgb_to_lab rejects out-of-range input") {
  CHECK_THROWS_AS((void)rgb_to_lab(rgb_tensor(1.2, 0, 0)), ValidationError);
  CHECK_THROWS_AS((void)rgb_to_lab(rgb_tensor(-0.1, 0.5, 0.5)), ValidationError);
  CHECK_THROWS_AS((void)rgb_to_lab(Tensor::zeros({1, 2, 2})), std::exception);  // wrong planes
}

TEST_CASE("image tensor round trip") {
  ImageU8 img;
  img.h = 2;
  img.w = 3;
  img.c = 3;
  img.pixels = {0, 128, 255, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120, 250, 5, 77};
  Tensor t = image_to_tensor(img);
  REQUIRE(t.shape() == std::vector<int>{3, 2, 3});
  CHECK(t[0] == doctest::Approx(0.0));
  CHECK(t[6] == doctest::Approx(128.0 / 255.0));  // G plane, first pixel
  ImageU8 back = tensor_to_image_u8(t);
  CHECK(back.pixels == img.pixels);
}

TEST_CASE("validate_pair enforces the dataset invariants") {
  StereoPair good;
  good.left = Tensor::zeros({3, 4, 5});
  good.right = Tensor::zeros({3, 4, 5});
  good.label = make_label_map(4, 5);
  good.id = "ok";
  CHECK_NOTHROW((void)validate_pair(good));

  StereoPair bad = good;
  bad.right = Tensor::zeros({3, 4, 6});
  CHECK_THROWS_AS((void)validate_pair(bad), ValidationError);

  bad = good;
  bad.left[3] = std::nan("");
  CHECK_THROWS_AS((void)validate_pair(bad), ValidationError);

  bad = good;
  bad.label.at(0, 0) = -2;
  CHECK_THROWS_AS((void)validate_pair(bad), ValidationError);

  bad = good;
  bad.label = make_label_map(3, 5);
  CHECK_THROWS_AS((void)validate_pair(bad), ValidationError);
}

TEST_CASE("label_from_tensor rejects non-integral and non-finite entries") {
  Tensor ok = Tensor::from({1, 2}, {0.0, 3.0});
  LabelMap m = label_from_tensor(ok);
  CHECK(m.at(0, 1) == 3);
  CHECK(m.max_id() == 3);
  CHECK(m.n_distinct() == 2);

  CHECK_THROWS_AS((void)label_from_tensor(Tensor::from({1, 2}, {0.0, 1.5})), ValidationError);
  CHECK_THROWS_AS((void)label_from_tensor(Tensor::from({1, 2}, {0.0, std::nan("")})),
                  ValidationError);
  CHECK_THROWS_AS((void)label_from_tensor(Tensor::from({1, 2}, {-1.0, 0.0})), ValidationError);
}

TEST_CASE("PNG round trips") {
  TempDir tmp;
  std::mt19937_64 rng(22);

  ImageU8 img;
  img.h = 5;
  img.w = 7;
  img.c = 3;
  img.pixels.resize(5 * 7 * 3);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  std::string rgb_path = tmp.sub("img.png");
  write_png_rgb8(rgb_path, img);
  ImageU8 back = read_png_rgb8(rgb_path);
  CHECK(back.h == img.h);
  CHECK(back.w == img.w);
  CHECK(back.pixels == img.pixels);

  LabelMap labels = make_label_map(4, 6);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) labels.at(y, x) = (y * 6 + x) * 1000 % 65536;
  labels.at(0, 0) = 65535;
  std::string lab_path = tmp.sub("labels.png");
  write_png_label16(lab_path, labels);
  LabelMap lback = read_png_label16(lab_path);
  CHECK(lback.h == 4);
  CHECK(lback.w == 6);
  CHECK(lback.ids == labels.ids);

  CHECK_THROWS_AS((void)read_png_rgb8(tmp.sub("missing.png")), IoError);

  // grayscale writer is 8-bit single channel
  std::vector<std::uint8_t> gray(12, 200);
  std::string gray_path = tmp.sub("gray.png");
  write_png_gray8(gray_path, gray, 3, 4);
  std::ifstream f(gray_path, std::ios::binary);
  CHECK(f.good());
}

TEST_CASE("label PNG stores 16-bit samples") {
  TempDir tmp;
  LabelMap labels = make_label_map(1, 2);
  labels.at(0, 0) = 258;  // 0x0102
  labels.at(0, 1) = 0;
  std::string path = tmp.sub("l.png");
  write_png_label16(path, labels);

  std::ifstream f(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  REQUIRE(bytes.size() > 24);
  // PNG signature and IHDR bit depth 16, color type 0
  const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  for (int i = 0; i < 8; ++i) CHECK(bytes[i] == sig[i]);
  CHECK(bytes[24] == 16);
  CHECK(bytes[25] == 0);

  CHECK_THROWS(write_png_label16(tmp.sub("bad.png"), [] {
    LabelMap m = make_label_map(1, 1);
    m.at(0, 0) = 70000;  // exceeds 16-bit range
    return m;
  }()));
}

TEST_CASE("feature dump format") {
  TempDir tmp;
  std::mt19937_64 rng(23);
  Tensor chw = rand_tensor({3, 2, 4}, rng);
  std::string path = tmp.sub("f.fmp");
  write_feature_dump(path, chw);

  std::ifstream f(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  REQUIRE(bytes.size() == 16 + 3 * 2 * 4 * 4);
  CHECK(bytes[0] == 'F');
  CHECK(bytes[1] == 'M');
  CHECK(bytes[2] == 'P');
  CHECK(bytes[3] == '1');
  auto u32 = [&](int off) {
    return static_cast<std::uint32_t>(bytes[off]) | (static_cast<std::uint32_t>(bytes[off + 1]) << 8) |
           (static_cast<std::uint32_t>(bytes[off + 2]) << 16) |
           (static_cast<std::uint32_t>(bytes[off + 3]) << 24);
  };
  CHECK(u32(4) == 2);   // H
  CHECK(u32(8) == 4);   // W
  CHECK(u32(12) == 3);  // C

  // payload is row-major (H,W,C) float32: first sample is pixel (0,0) channel 0
  float s0;
  std::memcpy(&s0, bytes.data() + 16, 4);
  CHECK(s0 == doctest::Approx(static_cast<float>(chw[0])));
  float s1;  // second sample: pixel (0,0) channel 1
  std::memcpy(&s1, bytes.data() + 20, 4);
  CHECK(s1 == doctest::Approx(static_cast<float>(chw[2 * 4])));

  Tensor back = read_feature_dump(path);
  REQUIRE(back.shape() == chw.shape());
  for (std::int64_t i = 0; i < chw.size(); ++i)
    CHECK(back[i] == doctest::Approx(chw[i]).epsilon(1e-6));

  CHECK_THROWS((void)read_feature_dump(tmp.sub("missing.fmp")));
  std::ofstream junk(tmp.sub("junk.fmp"), std::ios::binary);
  junk << "NOPE";
  junk.close();
  CHECK_THROWS((void)read_feature_dump(tmp.sub("junk.fmp")));
}
