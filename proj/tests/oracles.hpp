// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

// Brute-force reference implementations used by the unit and acceptance tests.
// They deliberately avoid the library code paths they are compared against.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "crabsurvey/det_eval.hpp"
#include "crabsurvey/imaging.hpp"

namespace crabsurvey::oracle {

inline ImageBuffer random_image(int w, int h, int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageBuffer img(w, h, c);
  for (auto& v : img.pixels()) v = u(rng);
  return img;
}

inline double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  long double se = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      for (int c = 0; c < a.channels(); ++c) {
        const long double d = 255.0L * a.at(x, y, c) - 255.0L * b.at(x, y, c);
        se += d * d;
      }
  const long double mse = se / (static_cast<long double>(a.width()) * a.height() * a.channels());
  if (mse == 0) return INFINITY;
  return static_cast<double>(10.0L * std::log10(255.0L * 255.0L / mse));
}

// Direct 2-D window sums at every valid position.
inline double ssim(const ImageBuffer& a, const ImageBuffer& b) {
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  double w2[kWin][kWin];
  double total = 0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      const double di = i - 5, dj = j - 5;
      w2[i][j] = std::exp(-(di * di + dj * dj) / (2 * kSigma * kSigma));
      total += w2[i][j];
    }
  for (auto& row : w2)
    for (double& v : row) v /= total;
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  double sum_channels = 0;
  for (int c = 0; c < a.channels(); ++c) {
    double sum = 0;
    int count = 0;
    for (int y0 = 0; y0 + kWin <= a.height(); ++y0)
      for (int x0 = 0; x0 + kWin <= a.width(); ++x0) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < kWin; ++i)
          for (int j = 0; j < kWin; ++j) {
            const double w = w2[i][j];
            const double va = 255 * a.at(x0 + j, y0 + i, c), vb = 255 * b.at(x0 + j, y0 + i, c);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        sum += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    sum_channels += sum / count;
  }
  return sum_channels / a.channels();
}

// Each true positive lifts recall by 1/G; it is credited with the best precision
// reached at any rank at or after it.
inline double average_precision(const std::vector<bool>& ranked_tp, long num_gt) {
  const std::size_t n = ranked_tp.size();
  std::vector<double> precision(n);
  for (std::size_t k = 0; k < n; ++k) {
    long tp = 0;
    for (std::size_t j = 0; j <= k; ++j) tp += ranked_tp[j];
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  double ap = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!ranked_tp[k]) continue;
    double best = 0;
    for (std::size_t j = k; j < n; ++j) best = std::max(best, precision[j]);
    ap += best / static_cast<double>(num_gt);
  }
  return ap;
}

}  // namespace crabsurvey::oracle
