// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include "crabsurvey/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

#include "crabsurvey/errors.hpp"

namespace crabsurvey {

namespace {

void check_dims(int width, int height, int channels) {
  if (width <= 0 || height <= 0) {
    throw ShapeError("image dimensions must be positive, got " + std::to_string(width) + "x" +
                     std::to_string(height));
  }
  if (channels != 1 && channels != 3) {
    throw ShapeError("image channels must be 1 or 3, got " + std::to_string(channels));
  }
}

// One output sample: a contiguous run of source taps (already clamped) and their weights.
struct Contribution {
  std::vector<int> index;
  std::vector<double> weight;
};

std::vector<Contribution> axis_contributions(int in_size, int out_size, double a, bool antialias) {
  const double scale = static_cast<double>(out_size) / in_size;
  const double stretch = (antialias && scale < 1.0) ? 1.0 / scale : 1.0;
  const double radius = 2.0 * stretch;
  std::vector<Contribution> table(out_size);
  for (int o = 0; o < out_size; ++o) {
    const double center = (o + 0.5) / scale - 0.5;
    const int first = static_cast<int>(std::floor(center - radius)) + 1;
    const int last = static_cast<int>(std::floor(center + radius));
    auto& contrib = table[o];
    double total = 0.0;
    for (int i = first; i <= last; ++i) {
      const double w = cubic_kernel((i - center) / stretch, a);
      if (w == 0.0) continue;
      contrib.index.push_back(std::clamp(i, 0, in_size - 1));
      contrib.weight.push_back(w);
      total += w;
    }
    for (double& w : contrib.weight) w /= total;
  }
  return table;
}

}  // namespace

ImageBuffer::ImageBuffer(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  check_dims(width, height, channels);
  pixels_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

ImageBuffer::ImageBuffer(int width, int height, int channels, std::vector<double> pixels)
    : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)) {
  check_dims(width, height, channels);
  if (pixels_.size() != static_cast<std::size_t>(width) * height * channels) {
    throw ShapeError("pixel count does not match width*height*channels");
  }
}

ImageBuffer ImageBuffer::from_bytes(int width, int height, int channels,
                                    std::span<const std::uint8_t> bytes) {
  check_dims(width, height, channels);
  if (bytes.size() != static_cast<std::size_t>(width) * height * channels) {
    throw ShapeError("byte count does not match width*height*channels");
  }
  std::vector<double> px(bytes.size());
  std::transform(bytes.begin(), bytes.end(), px.begin(),
                 [](std::uint8_t b) { return b / 255.0; });
  return ImageBuffer(width, height, channels, std::move(px));
}

std::vector<std::uint8_t> ImageBuffer::to_bytes() const {
  std::vector<std::uint8_t> out(pixels_.size());
  std::transform(pixels_.begin(), pixels_.end(), out.begin(), [](double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  });
  return out;
}

double ImageBuffer::mean() const {
  if (pixels_.empty()) return 0.0;
  return std::accumulate(pixels_.begin(), pixels_.end(), 0.0) / pixels_.size();
}

void ImageBuffer::validate() const {
  check_dims(width_, height_, channels_);
  for (double v : pixels_) {
    if (!(v >= 0.0 && v <= 1.0)) throw ShapeError("pixel value outside [0,1]");
  }
}

ImageBuffer ImageBuffer::crop(int x0, int y0, int w, int h) const {
  if (x0 < 0 || y0 < 0 || w <= 0 || h <= 0 || x0 + w > width_ || y0 + h > height_) {
    throw ShapeError("crop rectangle outside image");
  }
  ImageBuffer out(w, h, channels_);
  for (int y = 0; y < h; ++y) {
    const double* src = &pixels_[(static_cast<std::size_t>(y0 + y) * width_ + x0) * channels_];
    std::copy(src, src + static_cast<std::size_t>(w) * channels_, &out.at(0, y, 0));
  }
  return out;
}

double cubic_kernel(double t, double a) {
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

ImageBuffer resample_bicubic(const ImageBuffer& img, const ResampleSpec& spec) {
  if (spec.target_width <= 0 || spec.target_height <= 0) {
    throw ShapeError("resample target dimensions must be positive");
  }
  if (!std::isfinite(spec.a)) throw ShapeError("bicubic parameter must be finite");
  const int c = img.channels();
  const auto cols = axis_contributions(img.width(), spec.target_width, spec.a, spec.antialias);
  const auto rows = axis_contributions(img.height(), spec.target_height, spec.a, spec.antialias);

  // Horizontal pass into an (in_h x out_w) intermediate, then vertical.
  std::vector<double> tmp(static_cast<std::size_t>(img.height()) * spec.target_width * c, 0.0);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < spec.target_width; ++x) {
      const auto& con = cols[x];
      double* dst = &tmp[(static_cast<std::size_t>(y) * spec.target_width + x) * c];
      for (std::size_t k = 0; k < con.index.size(); ++k) {
        for (int ch = 0; ch < c; ++ch) dst[ch] += con.weight[k] * img.at(con.index[k], y, ch);
      }
    }
  }
  ImageBuffer out(spec.target_width, spec.target_height, c);
  for (int y = 0; y < spec.target_height; ++y) {
    const auto& con = rows[y];
    for (int x = 0; x < spec.target_width; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t k = 0; k < con.index.size(); ++k) {
          acc += con.weight[k] *
                 tmp[(static_cast<std::size_t>(con.index[k]) * spec.target_width + x) * c + ch];
        }
        out.at(x, y, ch) = std::clamp(acc, 0.0, 1.0);
      }
    }
  }
  return out;
}

ImageBuffer resize(const ImageBuffer& img, int width, int height) {
  return resample_bicubic(img, ResampleSpec{width, height});
}

ImageBuffer center_crop_divisible(const ImageBuffer& img, int factor) {
  if (factor < 1) throw ShapeError("crop factor must be positive");
  const int w = img.width() / factor * factor;
  const int h = img.height() / factor * factor;
  if (w == 0 || h == 0) throw ShapeError("image smaller than degradation factor");
  if (w == img.width() && h == img.height()) return img;
  return img.crop((img.width() - w) / 2, (img.height() - h) / 2, w, h);
}

ImageBuffer degrade(const ImageBuffer& hr, int factor) {
  if (factor < 2) throw std::invalid_argument("degradation factor must be >= 2");
  const ImageBuffer cropped = center_crop_divisible(hr, factor);
  return resample_bicubic(cropped,
                          ResampleSpec{cropped.width() / factor, cropped.height() / factor});
}

ImageBuffer load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw MissingInputError("image not found: " + path.string());
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw std::runtime_error("unsupported or corrupt image " + path.string() + ": " +
                             image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw ShapeError("zero-dimension image: " + path.string());
  }
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&image);
    throw std::runtime_error("failed to decode " + path.string() + ": " + image.message);
  }
  return ImageBuffer::from_bytes(static_cast<int>(image.width), static_cast<int>(image.height),
                                 channels, bytes);
}

void save_image(const ImageBuffer& img, const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const auto bytes = img.to_bytes();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw std::runtime_error("failed to write " + path.string() + ": " + image.message);
  }
}

ImageBuffer to_luma(const ImageBuffer& img) {
  if (img.channels() == 1) return img;
  ImageBuffer out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      out.at(x, y, 0) =
          0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
    }
  }
  return out;
}

}  // namespace crabsurvey
