// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include "crabsurvey/iq_metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "crabsurvey/errors.hpp"
#include "oracles.hpp"

namespace crabsurvey {
namespace {

TEST(Psnr, MatchesBruteForce) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20; ++i) {
    const auto a = oracle::random_image(32, 32, 3, rng);
    const auto b = oracle::random_image(32, 32, 3, rng);
    EXPECT_NEAR(iq::psnr(a, b), oracle::psnr(a, b), 1e-9);
  }
}

TEST(Psnr, UniformOffsetHandValue) {
  const ImageBuffer ref(16, 16, 1, 100.0 / 255.0);
  const ImageBuffer off(16, 16, 1, 116.0 / 255.0);
  const double expected = 10.0 * std::log10(255.0 * 255.0 / 256.0);
  EXPECT_NEAR(iq::psnr(ref, off), expected, 1e-9);
  EXPECT_NEAR(iq::psnr(ref, off), 24.05, 0.01);
}

TEST(Psnr, IdenticalIsInfinite) {
  const ImageBuffer a(8, 8, 3, 0.3);
  EXPECT_EQ(iq::psnr(a, a), iq::kPsnrIdentical);
  EXPECT_EQ(iq::format_number(iq::psnr(a, a)), "inf");
}

TEST(Psnr, SymmetricAndDecreasingInNoise) {
  std::mt19937_64 rng(3);
  const auto a = oracle::random_image(24, 24, 1, rng);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> noise(a.size());
  for (auto& v : noise) v = n(rng);
  double last = INFINITY;
  for (double sigma : {0.01, 0.02, 0.05, 0.1}) {
    ImageBuffer b = a;
    for (std::size_t i = 0; i < b.size(); ++i) b.pixels()[i] += sigma * noise[i];
    EXPECT_DOUBLE_EQ(iq::psnr(a, b), iq::psnr(b, a));
    const double p = iq::psnr(a, b);
    EXPECT_LT(p, last);
    last = p;
  }
}

TEST(Psnr, RejectsShapeMismatch) {
  EXPECT_THROW(iq::psnr(ImageBuffer(4, 4, 1), ImageBuffer(4, 5, 1)), ShapeError);
}

TEST(Ssim, MatchesBruteForce) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10; ++i) {
    const auto a = oracle::random_image(32, 32, i % 2 ? 3 : 1, rng);
    ImageBuffer b = a;
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (auto& v : b.pixels()) v = std::clamp(v + u(rng), 0.0, 1.0);
    EXPECT_NEAR(iq::ssim(a, b), oracle::ssim(a, b), 1e-9);
  }
}

TEST(Ssim, IdenticalIsExactlyOne) {
  std::mt19937_64 rng(8);
  const auto a = oracle::random_image(20, 17, 3, rng);
  EXPECT_EQ(iq::ssim(a, a), 1.0);
}

TEST(Ssim, GaussianTapsNormalized) {
  const auto taps = iq::ssim_gaussian_taps();
  ASSERT_EQ(taps.size(), 11u);
  double s = 0;
  for (double t : taps) s += t;
  EXPECT_NEAR(s, 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(taps[0], taps[10]);
  EXPECT_GT(taps[5], taps[4]);
}

TEST(Ssim, InverseCheckerboardIsNotPositive) {
  ImageBuffer a(16, 16, 1), b(16, 16, 1);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      a.at(x, y, 0) = (x + y) % 2;
      b.at(x, y, 0) = 1 - a.at(x, y, 0);
    }
  EXPECT_LE(iq::ssim(a, b), 0.0);
}

TEST(Ssim, SymmetricAndBounded) {
  std::mt19937_64 rng(9);
  const auto a = oracle::random_image(16, 16, 1, rng);
  const auto b = oracle::random_image(16, 16, 1, rng);
  const double s = iq::ssim(a, b);
  EXPECT_NEAR(s, iq::ssim(b, a), 1e-15);
  EXPECT_LE(s, 1.0);
  EXPECT_GE(s, -1.0);
}

// Contrast and structure terms ignore a shared offset; only the luminance term moves.
TEST(Ssim, NearlyInvariantToSharedOffset) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> mid(0.2, 0.8), noise(-0.05, 0.05);
  ImageBuffer a(32, 32, 1), b(32, 32, 1);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a.pixels()[i] = mid(rng);
    b.pixels()[i] = a.pixels()[i] + noise(rng);
  }
  const double base = iq::ssim(a, b);
  for (double gray : {-10.0, 10.0}) {
    ImageBuffer a2 = a, b2 = b;
    for (auto& v : a2.pixels()) v += gray / 255.0;
    for (auto& v : b2.pixels()) v += gray / 255.0;
    EXPECT_NEAR(iq::ssim(a2, b2), base, 1e-3) << gray;
  }
}

TEST(Ssim, TooSmallThrows) {
  EXPECT_THROW(iq::ssim(ImageBuffer(10, 20, 1), ImageBuffer(10, 20, 1)), ShapeError);
}

TEST(Metrics, LumaOnlyUsesOneChannel) {
  std::mt19937_64 rng(2);
  const auto a = oracle::random_image(16, 16, 3, rng);
  const auto b = oracle::random_image(16, 16, 3, rng);
  EXPECT_NEAR(iq::psnr(a, b, {.luma_only = true}), oracle::psnr(to_luma(a), to_luma(b)), 1e-9);
  EXPECT_NEAR(iq::ssim(a, b, {.luma_only = true}), oracle::ssim(to_luma(a), to_luma(b)), 1e-9);
}

TEST(IQReport, AggregatesAndCsv) {
  iq::IQReport r;
  r.add({"a", "bicubic", 30.0, 0.8});
  r.add({"b", "bicubic", 32.0, 0.9});
  r.add({"a", "rdn", 35.0, 0.95});
  const auto agg = r.aggregates();
  ASSERT_EQ(agg.size(), 2u);
  EXPECT_EQ(agg[0].method, "bicubic");
  EXPECT_DOUBLE_EQ(agg[0].psnr_db, 31.0);
  EXPECT_NEAR(agg[0].ssim, 0.85, 1e-15);
  EXPECT_EQ(agg[1].count, 1);

  const auto path = std::filesystem::temp_directory_path() / "crabsurvey_iq_report.csv";
  r.write_csv(path);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "image_id,method,psnr_db,ssim");
  EXPECT_NE(ss.str().find("mean,bicubic,31.000000,0.850000"), std::string::npos);
  std::filesystem::remove(path);
}

TEST(FormatNumber, NoNegativeZero) {
  EXPECT_EQ(iq::format_number(-0.0), "0.000000");
  EXPECT_EQ(iq::format_number(-1e-9), "0.000000");
  EXPECT_EQ(iq::format_number(1.5, 2), "1.50");
}

}  // namespace
}  // namespace crabsurvey
