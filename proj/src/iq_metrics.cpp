// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include "crabsurvey/iq_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "crabsurvey/errors.hpp"

namespace crabsurvey::iq {

namespace {

void check_pair(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("metric inputs differ in shape: " + std::to_string(a.width()) + "x" +
                     std::to_string(a.height()) + "x" + std::to_string(a.channels()) + " vs " +
                     std::to_string(b.width()) + "x" + std::to_string(b.height()) + "x" +
                     std::to_string(b.channels()));
  }
}

// Valid-mode separable filter of one channel (values pre-scaled to 8-bit range).
std::vector<double> filter_valid(const std::vector<double>& plane, int w, int h,
                                 const std::vector<double>& taps) {
  const int k = static_cast<int>(taps.size());
  const int ow = w - k + 1, oh = h - k + 1;
  std::vector<double> horiz(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += taps[i] * plane[static_cast<std::size_t>(y) * w + x + i];
      horiz[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += taps[i] * horiz[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace

std::vector<double> ssim_gaussian_taps() {
  std::vector<double> taps(kSsimWindow);
  double total = 0.0;
  const int r = kSsimWindow / 2;
  for (int i = 0; i < kSsimWindow; ++i) {
    taps[i] = std::exp(-static_cast<double>((i - r) * (i - r)) / (2.0 * kSsimSigma * kSsimSigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  return taps;
}

double psnr(const ImageBuffer& reference, const ImageBuffer& candidate, MetricOptions opt) {
  check_pair(reference, candidate);
  const ImageBuffer a = opt.luma_only ? to_luma(reference) : reference;
  const ImageBuffer b = opt.luma_only ? to_luma(candidate) : candidate;
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = (a.pixels()[i] - b.pixels()[i]) * kMaxGray;
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(kMaxGray * kMaxGray / mse);
}

double ssim(const ImageBuffer& reference, const ImageBuffer& candidate, MetricOptions opt) {
  check_pair(reference, candidate);
  if (reference.width() < kSsimWindow || reference.height() < kSsimWindow) {
    throw ShapeError("image smaller than the 11x11 SSIM window");
  }
  const ImageBuffer a = opt.luma_only ? to_luma(reference) : reference;
  const ImageBuffer b = opt.luma_only ? to_luma(candidate) : candidate;
  const auto taps = ssim_gaussian_taps();
  const int w = a.width(), h = a.height();
  const std::size_t n = static_cast<std::size_t>(w) * h;
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (int py = 0; py < h; ++py)
      for (int px = 0; px < w; ++px) {
        const std::size_t i = static_cast<std::size_t>(py) * w + px;
        x[i] = a.at(px, py, c) * kMaxGray;
        y[i] = b.at(px, py, c) * kMaxGray;
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
      }
    const auto mx = filter_valid(x, w, h, taps);
    const auto my = filter_valid(y, w, h, taps);
    const auto mxx = filter_valid(xx, w, h, taps);
    const auto myy = filter_valid(yy, w, h, taps);
    const auto mxy = filter_valid(xy, w, h, taps);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = mxx[i] - mx[i] * mx[i];
      const double vy = myy[i] - my[i] * my[i];
      const double cov = mxy[i] - mx[i] * my[i];
      acc += ((2.0 * mx[i] * my[i] + kSsimC1) * (2.0 * cov + kSsimC2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + kSsimC1) * (vx + vy + kSsimC2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / a.channels();
}

std::vector<IQAggregate> IQReport::aggregates() const {
  std::vector<IQAggregate> out;
  for (const auto& r : records_) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const IQAggregate& a) { return a.method == r.method; });
    if (it == out.end()) {
      out.push_back({r.method, 0.0, 0.0, 0});
      it = std::prev(out.end());
    }
    it->psnr_db += r.psnr_db;
    it->ssim += r.ssim;
    ++it->count;
  }
  for (auto& a : out) {
    a.psnr_db /= a.count;
    a.ssim /= a.count;
  }
  return out;
}

void IQReport::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "image_id,method,psnr_db,ssim\n";
  for (const auto& r : records_) {
    out << r.image_id << ',' << r.method << ',' << format_number(r.psnr_db) << ','
        << format_number(r.ssim) << '\n';
  }
  for (const auto& a : aggregates()) {
    out << "mean," << a.method << ',' << format_number(a.psnr_db) << ',' << format_number(a.ssim)
        << '\n';
  }
}

std::string format_number(double v, int decimals) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  // Avoid "-0.000000" from tiny negative values.
  std::string s = buf;
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

}  // namespace crabsurvey::iq
