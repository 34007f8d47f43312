// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include "crabsurvey/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace crabsurvey {

namespace {

using Rgb = std::array<double, 3>;

constexpr Rgb kSand{0.80, 0.72, 0.55};
constexpr Rgb kWater{0.18, 0.38, 0.52};
constexpr Rgb kShell{0.42, 0.24, 0.12};
constexpr Rgb kShellHighlight{0.70, 0.52, 0.36};
constexpr Rgb kClaw{0.62, 0.22, 0.14};
constexpr Rgb kPebble{0.55, 0.55, 0.52};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Smooth noise in roughly [-1, 1]: a coarse random lattice upsampled bicubically.
ImageBuffer value_noise(int w, int h, int cell, std::mt19937_64& rng) {
  const int gw = std::max(2, w / cell + 1), gh = std::max(2, h / cell + 1);
  ImageBuffer coarse(gw, gh, 1);
  for (auto& v : coarse.pixels()) v = uniform(rng, 0.0, 1.0);
  return resize(coarse, w, h);
}

struct Crab {
  double cx, cy, rx, ry, angle;
  bool underwater;
};

// Coverage of a pixel by a predicate, 4x4 supersampled.
template <class Inside>
double coverage(int x, int y, Inside inside) {
  int hits = 0;
  for (int sy = 0; sy < 4; ++sy)
    for (int sx = 0; sx < 4; ++sx) hits += inside(x + (sx + 0.5) / 4.0, y + (sy + 0.5) / 4.0);
  return hits / 16.0;
}

void blend(ImageBuffer& img, int x, int y, const Rgb& color, double alpha) {
  if (alpha <= 0) return;
  for (int c = 0; c < 3; ++c) img.at(x, y, c) = (1 - alpha) * img.at(x, y, c) + alpha * color[c];
}

Rgb mix(const Rgb& a, const Rgb& b, double t) {
  return {a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])};
}

// Fills every pixel of [x1, x2) x [y1, y2) with partial coverage of `inside`.
template <class Inside>
void paint(ImageBuffer& img, double x1, double y1, double x2, double y2, const Rgb& color,
           Inside inside) {
  const int ix1 = std::max(0, static_cast<int>(std::floor(x1)));
  const int iy1 = std::max(0, static_cast<int>(std::floor(y1)));
  const int ix2 = std::min(img.width(), static_cast<int>(std::ceil(x2)));
  const int iy2 = std::min(img.height(), static_cast<int>(std::ceil(y2)));
  for (int y = iy1; y < iy2; ++y)
    for (int x = ix1; x < ix2; ++x) blend(img, x, y, color, coverage(x, y, inside));
}

BoundingBox draw_crab(ImageBuffer& img, const Crab& crab) {
  const double ca = std::cos(crab.angle), sa = std::sin(crab.angle);
  const Rgb tint = crab.underwater ? kWater : Rgb{0, 0, 0};
  const double t = crab.underwater ? 0.35 : 0.0;

  // Claws sit ahead of the shell along its major axis, one either side.
  const double claw_r = 0.4 * crab.ry;
  std::array<std::pair<double, double>, 2> claws;
  for (int s = 0; s < 2; ++s) {
    const double side = s == 0 ? -1.0 : 1.0;
    const double fx = 1.05 * crab.rx, fy = side * 0.55 * crab.ry;
    claws[s] = {crab.cx + fx * ca - fy * sa, crab.cy + fx * sa + fy * ca};
  }
  for (const auto& [px, py] : claws) {
    paint(img, px - claw_r, py - claw_r, px + claw_r, py + claw_r, mix(kClaw, tint, t),
          [&](double x, double y) {
            return (x - px) * (x - px) + (y - py) * (y - py) <= claw_r * claw_r;
          });
  }

  auto in_ellipse = [&](double x, double y, double scale) {
    const double dx = x - crab.cx, dy = y - crab.cy;
    const double u = (dx * ca + dy * sa) / (crab.rx * scale);
    const double v = (-dx * sa + dy * ca) / (crab.ry * scale);
    return u * u + v * v <= 1.0;
  };
  const double ex = std::sqrt(crab.rx * crab.rx * ca * ca + crab.ry * crab.ry * sa * sa);
  const double ey = std::sqrt(crab.rx * crab.rx * sa * sa + crab.ry * crab.ry * ca * ca);
  paint(img, crab.cx - ex, crab.cy - ey, crab.cx + ex, crab.cy + ey, mix(kShell, tint, t),
        [&](double x, double y) { return in_ellipse(x, y, 1.0); });
  // Spiral whorl: an off-center highlight and an inner dark ring.
  paint(img, crab.cx - ex, crab.cy - ey, crab.cx + ex, crab.cy + ey,
        mix(kShellHighlight, tint, t), [&](double x, double y) {
          return in_ellipse(x + 0.25 * crab.rx * ca, y + 0.25 * crab.rx * sa, 0.55) &&
                 !in_ellipse(x + 0.25 * crab.rx * ca, y + 0.25 * crab.rx * sa, 0.3);
        });

  double x1 = crab.cx - ex, x2 = crab.cx + ex, y1 = crab.cy - ey, y2 = crab.cy + ey;
  for (const auto& [px, py] : claws) {
    x1 = std::min(x1, px - claw_r);
    x2 = std::max(x2, px + claw_r);
    y1 = std::min(y1, py - claw_r);
    y2 = std::max(y2, py + claw_r);
  }
  const double w = img.width(), h = img.height();
  BoundingBox box = BoundingBox::from_corners(
      crab.underwater ? static_cast<int>(CrabClass::kUnderwater)
                      : static_cast<int>(CrabClass::kOnSand),
      x1 / w, y1 / h, x2 / w, y2 / h);
  clip_box(box);
  return box;
}

}  // namespace

LabeledImage synthesize_scene(const SceneSpec& spec, std::mt19937_64& rng, std::string id) {
  if (spec.width < 16 || spec.height < 16 || spec.min_crabs < 0 ||
      spec.max_crabs < spec.min_crabs || !(spec.min_radius > 0) ||
      spec.max_radius < spec.min_radius) {
    throw std::invalid_argument("invalid scene spec");
  }
  const int w = spec.width, h = spec.height;
  ImageBuffer img(w, h, 3);

  const double water = uniform(rng, spec.min_water, spec.max_water) * h;
  const double wave_amp = uniform(rng, 0.02, 0.06) * h;
  const double wave_len = uniform(rng, 0.5, 1.5) * w;
  const double phase = uniform(rng, 0.0, 2 * std::numbers::pi);
  auto waterline = [&](double x) {
    return water + wave_amp * std::sin(2 * std::numbers::pi * x / wave_len + phase);
  };

  const ImageBuffer noise = value_noise(w, h, std::max(4, w / 16), rng);
  const ImageBuffer ripple = value_noise(w, h, std::max(2, w / 48), rng);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double wet = coverage(x, y, [&](double px, double py) { return py < waterline(px); });
      const double n = spec.texture * (2 * noise.at(x, y, 0) - 1);
      const double r = spec.texture * (2 * ripple.at(x, y, 0) - 1);
      for (int c = 0; c < 3; ++c) {
        const double sand = kSand[c] + n;
        const double sea = kWater[c] + r;
        img.at(x, y, c) = std::clamp((1 - wet) * sand + wet * sea, 0.0, 1.0);
      }
    }

  const double side = std::min(w, h);
  for (int i = 0; i < spec.pebbles; ++i) {
    const double px = uniform(rng, 0, w), py = uniform(rng, 0, h);
    const double pr = uniform(rng, 0.004, 0.01) * side;
    paint(img, px - pr, py - pr, px + pr, py + pr, kPebble, [&](double x, double y) {
      return (x - px) * (x - px) + (y - py) * (y - py) <= pr * pr;
    });
  }

  std::vector<Crab> crabs;
  const int target = std::uniform_int_distribution<int>(spec.min_crabs, spec.max_crabs)(rng);
  for (int attempt = 0; attempt < 200 && static_cast<int>(crabs.size()) < target; ++attempt) {
    const double rx = uniform(rng, spec.min_radius, spec.max_radius) * side;
    const double ry = rx * uniform(rng, 0.7, 0.95);
    const double margin = 1.6 * rx;
    if (2 * margin >= w || 2 * margin >= h) continue;
    Crab c{uniform(rng, margin, w - margin), uniform(rng, margin, h - margin), rx, ry,
           uniform(rng, 0.0, 2 * std::numbers::pi), false};
    c.underwater = c.cy < waterline(c.cx);
    const bool clear = std::none_of(crabs.begin(), crabs.end(), [&](const Crab& o) {
      return std::hypot(o.cx - c.cx, o.cy - c.cy) < 1.8 * (o.rx + c.rx);
    });
    if (clear) crabs.push_back(c);
  }

  std::vector<BoundingBox> boxes;
  for (const auto& c : crabs) boxes.push_back(draw_crab(img, c));
  for (auto& v : img.pixels()) v = std::clamp(v, 0.0, 1.0);
  return {std::move(id), std::move(img), std::move(boxes)};
}

std::vector<LabeledImage> synthesize_dataset(const SceneSpec& spec, int count,
                                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledImage> out;
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%04d", i);
    out.push_back(synthesize_scene(spec, rng, id));
  }
  return out;
}

}  // namespace crabsurvey
