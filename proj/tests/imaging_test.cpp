// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "crabsurvey/errors.hpp"
#include "crabsurvey/imaging.hpp"

namespace crabsurvey {
namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("crabsurvey_imaging_" + name);
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Catmull-Rom written out as its expanded polynomial, independent of cubic_kernel().
double catmull_rom(double t) {
  t = std::abs(t);
  if (t <= 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
  if (t < 2.0) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
  return 0.0;
}

// Direct 2-D evaluation at each output coordinate: no separability, no tables.
ImageBuffer oracle_resample(const ImageBuffer& img, int ow, int oh, bool antialias) {
  ImageBuffer out(ow, oh, img.channels());
  const double sx = static_cast<double>(ow) / img.width();
  const double sy = static_cast<double>(oh) / img.height();
  const double stretch_x = (antialias && sx < 1) ? 1 / sx : 1;
  const double stretch_y = (antialias && sy < 1) ? 1 / sy : 1;
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      const double cx = (ox + 0.5) / sx - 0.5;
      const double cy = (oy + 0.5) / sy - 0.5;
      for (int c = 0; c < img.channels(); ++c) {
        double acc = 0, norm = 0;
        for (int iy = -8; iy < img.height() + 8; ++iy)
          for (int ix = -8; ix < img.width() + 8; ++ix) {
            const double w =
                catmull_rom((ix - cx) / stretch_x) * catmull_rom((iy - cy) / stretch_y);
            if (w == 0) continue;
            const int px = std::clamp(ix, 0, img.width() - 1);
            const int py = std::clamp(iy, 0, img.height() - 1);
            acc += w * img.at(px, py, c);
            norm += w;
          }
        out.at(ox, oy, c) = std::clamp(acc / norm, 0.0, 1.0);
      }
    }
  return out;
}

ImageBuffer random_image(int w, int h, int c, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  ImageBuffer img(w, h, c);
  for (double& v : img.pixels()) v = d(rng);
  return img;
}

TEST(ImageBuffer, ByteImportExport) {
  const std::vector<std::uint8_t> black(4, 0), white(4, 255);
  const auto zeros = ImageBuffer::from_bytes(2, 2, 1, black);
  const auto ones = ImageBuffer::from_bytes(2, 2, 1, white);
  for (double v : zeros.pixels()) EXPECT_EQ(v, 0.0);
  for (double v : ones.pixels()) EXPECT_EQ(v, 1.0);
  std::vector<std::uint8_t> all(256 * 3);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint8_t>(i % 256);
  const auto img = ImageBuffer::from_bytes(16, 16, 3, all);
  EXPECT_EQ(img.to_bytes(), all);
  EXPECT_NO_THROW(img.validate());
}

TEST(ImageBuffer, RejectsBadShapes) {
  EXPECT_THROW(ImageBuffer(0, 3, 1), ShapeError);
  EXPECT_THROW(ImageBuffer(3, 3, 2), ShapeError);
  EXPECT_THROW(ImageBuffer(2, 2, 1, std::vector<double>(3)), ShapeError);
  ImageBuffer bad(1, 1, 1, 1.5);
  EXPECT_THROW(bad.validate(), ShapeError);
}

TEST(ImageIo, BlackAndWhiteFiles) {
  const auto black = temp_path("black.png");
  save_image(ImageBuffer(2, 2, 1, 0.0), black);
  const auto loaded_black = load_image(black);
  for (double v : loaded_black.pixels()) EXPECT_EQ(v, 0.0);
  const auto white = temp_path("white.png");
  save_image(ImageBuffer(2, 2, 3, 1.0), white);
  const auto loaded = load_image(white);
  EXPECT_EQ(loaded.channels(), 3);
  for (double v : loaded.pixels()) EXPECT_EQ(v, 1.0);
}

TEST(ImageIo, RoundTripIsByteIdentical) {
  const auto img = ImageBuffer::from_bytes(
      7, 5, 3, random_image(7, 5, 3, 3).to_bytes());
  const auto a = temp_path("rt_a.png");
  const auto b = temp_path("rt_b.png");
  save_image(img, a);
  save_image(load_image(a), b);
  EXPECT_EQ(file_bytes(a), file_bytes(b));
  EXPECT_EQ(load_image(b).to_bytes(), img.to_bytes());
}

TEST(ImageIo, Errors) {
  EXPECT_THROW(load_image(temp_path("does_not_exist.png")), MissingInputError);
  const auto junk = temp_path("junk.png");
  std::ofstream(junk) << "not an image";
  EXPECT_THROW(load_image(junk), std::runtime_error);
}

TEST(Resample, ConstantStaysConstant) {
  const ImageBuffer img(13, 9, 3, 0.5);
  for (auto [w, h] : {std::pair{4, 4}, {26, 18}, {7, 30}}) {
    const auto out = resize(img, w, h);
    ASSERT_EQ(out.width(), w);
    for (double v : out.pixels()) EXPECT_NEAR(v, 0.5, 1e-12);
  }
}

TEST(Resample, TileDownsampleDims) {
  const auto out = resize(ImageBuffer(640, 640, 3, 0.2), 160, 160);
  EXPECT_EQ(out.width(), 160);
  EXPECT_EQ(out.height(), 160);
}

TEST(Resample, RampMatchesHandEvaluatedKernel) {
  // 1-D ramp [0, 1/3, 2/3, 1], point-sampled 2x downsample. Taps at distance 1.5/0.5/0.5/1.5
  // weigh -1/16, 9/16, 9/16, -1/16 with clamp-to-edge borders.
  ImageBuffer ramp(4, 1, 1, std::vector<double>{0.0, 1.0 / 3, 2.0 / 3, 1.0});
  ResampleSpec spec{2, 1};
  spec.antialias = false;
  const auto out = resample_bicubic(ramp, spec);
  EXPECT_NEAR(out.at(0, 0, 0), 7.0 / 48.0, 1e-12);
  EXPECT_NEAR(out.at(1, 0, 0), 41.0 / 48.0, 1e-12);

  ImageBuffer ramp2d(4, 4, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) ramp2d.at(x, y, 0) = (x + 2.0 * y) / 9.0;
  for (bool aa : {false, true}) {
    ResampleSpec s{2, 2};
    s.antialias = aa;
    const auto got = resample_bicubic(ramp2d, s);
    const auto want = oracle_resample(ramp2d, 2, 2, aa);
    for (std::size_t i = 0; i < got.size(); ++i)
      EXPECT_NEAR(got.pixels()[i], want.pixels()[i], 1e-12);
  }
}

TEST(Resample, RandomImagesMatchOracle) {
  const auto img = random_image(11, 8, 3, 7);
  for (auto [w, h] : {std::pair{5, 4}, {23, 17}, {11, 3}}) {
    const auto got = resize(img, w, h);
    const auto want = oracle_resample(img, w, h, true);
    for (std::size_t i = 0; i < got.size(); ++i)
      EXPECT_NEAR(got.pixels()[i], want.pixels()[i], 1e-12);
  }
}

TEST(Resample, IdentitySizeIsExact) {
  const auto img = random_image(17, 12, 3, 9);
  const auto out = resize(img, 17, 12);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out.pixels()[i], img.pixels()[i], 1e-12);
}

TEST(Resample, OutputsAreClamped) {
  ImageBuffer checker(8, 8, 1);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) checker.at(x, y, 0) = (x + y) % 2;
  const auto up = resize(checker, 29, 29);
  EXPECT_NO_THROW(up.validate());
  EXPECT_THROW(resize(checker, 0, 4), ShapeError);
}

TEST(Degrade, OutputDimsAndConstant) {
  EXPECT_EQ(degrade(ImageBuffer(640, 640, 3, 0.3), 4).width(), 160);
  EXPECT_EQ(degrade(ImageBuffer(640, 640, 3, 0.3), 2).width(), 320);
  for (int m : {2, 3, 4, 5}) {
    const auto lr = degrade(ImageBuffer(60, 40, 1, 0.7), m);
    EXPECT_EQ(lr.width(), 60 / m);
    for (double v : lr.pixels()) EXPECT_NEAR(v, 0.7, 1e-12);
  }
  EXPECT_THROW(degrade(ImageBuffer(8, 8, 1), 1), std::invalid_argument);
}

TEST(Degrade, NonDivisibleIsCenterCropped) {
  ImageBuffer hr(642, 641, 1);
  for (int y = 0; y < 641; ++y)
    for (int x = 0; x < 642; ++x) hr.at(x, y, 0) = (x == 0 || y == 640) ? 1.0 : 0.0;
  const auto lr = degrade(hr, 4);
  EXPECT_EQ(lr.width(), 160);
  EXPECT_EQ(lr.height(), 160);
  // The bright first column and last row lie outside the centered 640x640 crop.
  EXPECT_NEAR(lr.at(0, 0, 0), 0.0, 1e-12);
}

TEST(Degrade, RoundTripPreservesMean) {
  for (int m : {2, 3, 4, 5}) {
    const auto hr = random_image(120, 120, 3, 20 + m);
    const auto lr = degrade(hr, m);
    const auto up = resize(lr, 120, 120);
    EXPECT_NEAR(up.mean(), hr.mean(), 1.0 / 255.0) << "m=" << m;
  }
}

}  // namespace
}  // namespace crabsurvey
