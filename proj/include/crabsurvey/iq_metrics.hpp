// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "crabsurvey/imaging.hpp"

namespace crabsurvey::iq {

/// Peak value on the 8-bit scale; metrics operate on v * 255 without rounding.
inline constexpr double kMaxGray = 255.0;
/// PSNR of identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = (0.01 * kMaxGray) * (0.01 * kMaxGray);
inline constexpr double kSsimC2 = (0.03 * kMaxGray) * (0.03 * kMaxGray);

struct MetricOptions {
  /// Score Rec.601 luma instead of all channels.
  bool luma_only = false;
};

/// 10 log10(255^2 / MSE) over every element. Returns kPsnrIdentical when MSE == 0.
double psnr(const ImageBuffer& reference, const ImageBuffer& candidate, MetricOptions opt = {});

/// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5, stride 1, windows fully
/// inside the image), computed per channel and averaged.
double ssim(const ImageBuffer& reference, const ImageBuffer& candidate, MetricOptions opt = {});

/// Normalized 1-D Gaussian taps of the SSIM window.
std::vector<double> ssim_gaussian_taps();

struct IQRecord {
  std::string image_id;
  std::string method;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct IQAggregate {
  std::string method;
  double psnr_db = 0.0;
  double ssim = 0.0;
  int count = 0;
};

/// Per-image scores plus arithmetic means per method (first-appearance order).
class IQReport {
 public:
  void add(IQRecord record) { records_.push_back(std::move(record)); }
  const std::vector<IQRecord>& records() const { return records_; }
  std::vector<IQAggregate> aggregates() const;

  /// Columns image_id,method,psnr_db,ssim; one aggregate row per method with image_id "mean".
  void write_csv(const std::filesystem::path& path) const;

 private:
  std::vector<IQRecord> records_;
};

/// Fixed-point rendering used by every CSV writer ("inf" for infinities).
std::string format_number(double v, int decimals = 6);

}  // namespace crabsurvey::iq
