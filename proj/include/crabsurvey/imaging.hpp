// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace crabsurvey {

/// Interleaved H x W x C raster with values in [0, 1].
///
/// Buffers are value types. Pixel (x, y, c) lives at ((y * width) + x) * channels + c.
/// Constructors clamp nothing; `from_bytes` and the resamplers guarantee the [0, 1]
/// contract, and `validate()` checks it for buffers assembled by hand.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, double fill = 0.0);
  ImageBuffer(int width, int height, int channels, std::vector<double> pixels);

  /// 8-bit import: v / 255.
  static ImageBuffer from_bytes(int width, int height, int channels,
                                std::span<const std::uint8_t> bytes);
  /// 8-bit export: round(clamp(v) * 255).
  std::vector<std::uint8_t> to_bytes() const;

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  double& at(int x, int y, int c) {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int x, int y, int c) const {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<const double> pixels() const { return pixels_; }
  std::span<double> pixels() { return pixels_; }

  double mean() const;
  /// Throws ShapeError if any stored value is outside [0, 1] or non-finite.
  void validate() const;
  bool same_shape(const ImageBuffer& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  /// Sub-rectangle copy; the rectangle must lie inside the image.
  ImageBuffer crop(int x0, int y0, int w, int h) const;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> pixels_;
};

/// Keys cubic convolution family: a = -0.5 is Catmull-Rom.
inline constexpr double kCatmullRom = -0.5;

struct ResampleSpec {
  int target_width = 0;
  int target_height = 0;
  double a = kCatmullRom;
  /// When shrinking, widen the kernel by the scale factor (area-consistent prefilter).
  bool antialias = true;
};

/// Cubic convolution kernel value at distance t.
double cubic_kernel(double t, double a = kCatmullRom);

/// Separable bicubic resampling with half-pixel-center alignment and clamp-to-edge
/// borders. Output values are clamped to [0, 1].
ImageBuffer resample_bicubic(const ImageBuffer& img, const ResampleSpec& spec);

/// Convenience: resample to (w, h) with default kernel.
ImageBuffer resize(const ImageBuffer& img, int width, int height);

/// HR -> LR degradation: center-crop to an m-divisible size, then bicubic downsample by m.
ImageBuffer degrade(const ImageBuffer& hr, int factor);

/// Largest centered crop whose sides are divisible by `factor`.
ImageBuffer center_crop_divisible(const ImageBuffer& img, int factor);

/// PNG I/O, 8-bit gray or RGB. Gray+alpha and RGBA sources are stripped of alpha.
ImageBuffer load_image(const std::filesystem::path& path);
void save_image(const ImageBuffer& img, const std::filesystem::path& path);

/// Rec.601 luma for 3-channel images; 1-channel images are returned unchanged.
ImageBuffer to_luma(const ImageBuffer& img);

}  // namespace crabsurvey
