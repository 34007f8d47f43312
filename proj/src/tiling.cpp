// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include "crabsurvey/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "crabsurvey/errors.hpp"

namespace crabsurvey {

namespace {

std::vector<int> axis_offsets(int dim, const TileGrid& grid) {
  std::vector<int> offsets;
  if (grid.edge_policy == EdgePolicy::kDropPartial) {
    if (dim < grid.window) {
      throw std::invalid_argument("frame side " + std::to_string(dim) +
                                  " smaller than tile window " + std::to_string(grid.window));
    }
    for (int o = 0; o + grid.window <= dim; o += grid.stride) offsets.push_back(o);
    return offsets;
  }
  if (dim <= grid.window) return {0};
  int o = 0;
  for (; o + grid.window <= dim; o += grid.stride) offsets.push_back(o);
  if (offsets.back() + grid.window < dim) offsets.push_back(dim - grid.window);
  return offsets;
}

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

std::string format_box(const BoundingBox& b, bool with_confidence) {
  char buf[160];
  if (with_confidence) {
    std::snprintf(buf, sizeof(buf), "%d %.6f %.6f %.6f %.6f %.6f", b.class_id, b.cx, b.cy, b.w,
                  b.h, b.confidence);
  } else {
    std::snprintf(buf, sizeof(buf), "%d %.6f %.6f %.6f %.6f", b.class_id, b.cx, b.cy, b.w, b.h);
  }
  return buf;
}

std::vector<BoundingBox> read_boxes(const std::filesystem::path& path, bool with_confidence) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("label file not found: " + path.string());
  std::vector<BoundingBox> boxes;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    BoundingBox b;
    ls >> b.class_id >> b.cx >> b.cy >> b.w >> b.h;
    if (with_confidence) ls >> b.confidence;
    std::string extra;
    if (!ls || (ls >> extra)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": malformed box line");
    }
    if (b.class_id < 0 || b.class_id >= kNumClasses || !(b.w > 0) || !(b.h > 0)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": invalid box");
    }
    boxes.push_back(b);
  }
  return boxes;
}

void write_boxes(const std::vector<BoundingBox>& boxes, const std::filesystem::path& path,
                 bool with_confidence) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& b : boxes) out << format_box(b, with_confidence) << '\n';
}

}  // namespace

const char* class_name(int class_id) {
  switch (class_id) {
    case 0:
      return "underwater";
    case 1:
      return "on_sand";
    default:
      return "background";
  }
}

BoundingBox BoundingBox::from_corners(int class_id, double x1, double y1, double x2, double y2,
                                      double confidence) {
  return {class_id, (x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1, confidence};
}

bool clip_box(BoundingBox& box, double lo, double hi) {
  const double x1 = std::clamp(box.x1(), lo, hi), x2 = std::clamp(box.x2(), lo, hi);
  const double y1 = std::clamp(box.y1(), lo, hi), y2 = std::clamp(box.y2(), lo, hi);
  if (x2 <= x1 || y2 <= y1) return false;
  box = BoundingBox::from_corners(box.class_id, x1, y1, x2, y2, box.confidence);
  return true;
}

std::vector<TileRecord> plan_tiles(int frame_w, int frame_h, const TileGrid& grid,
                                   const std::string& source_id) {
  if (grid.window <= 0 || grid.stride <= 0 || grid.stride > grid.window) {
    throw std::invalid_argument("tile grid requires 0 < stride <= window");
  }
  if (frame_w <= 0 || frame_h <= 0) throw std::invalid_argument("frame dims must be positive");
  const auto xs = axis_offsets(frame_w, grid);
  const auto ys = axis_offsets(frame_h, grid);
  std::vector<TileRecord> tiles;
  tiles.reserve(xs.size() * ys.size());
  for (int y : ys)
    for (int x : xs) tiles.push_back({source_id, x, y, grid.window});
  return tiles;
}

ImageBuffer extract_tile(const ImageBuffer& frame, const TileRecord& tile) {
  if (tile.x0 < 0 || tile.y0 < 0 || tile.side <= 0) throw std::invalid_argument("bad tile record");
  if (tile.x0 + tile.side <= frame.width() && tile.y0 + tile.side <= frame.height()) {
    return frame.crop(tile.x0, tile.y0, tile.side, tile.side);
  }
  ImageBuffer out(tile.side, tile.side, frame.channels());
  for (int y = 0; y < tile.side; ++y) {
    const int sy = reflect101(tile.y0 + y, frame.height());
    for (int x = 0; x < tile.side; ++x) {
      const int sx = reflect101(tile.x0 + x, frame.width());
      for (int c = 0; c < frame.channels(); ++c) out.at(x, y, c) = frame.at(sx, sy, c);
    }
  }
  return out;
}

std::vector<BoundingBox> labels_for_tile(const std::vector<BoundingBox>& frame_boxes,
                                         const TileRecord& tile, double min_visible_fraction) {
  std::vector<BoundingBox> out;
  for (const auto& b : frame_boxes) {
    BoundingBox n = normalize_box_to_tile(tile, b);
    const double before = n.area();
    if (!(before > 0) || !clip_box(n)) continue;
    if (n.area() < min_visible_fraction * before) continue;
    out.push_back(n);
  }
  return out;
}

BoundingBox remap_box_to_global(const TileRecord& tile, const BoundingBox& box) {
  const double s = tile.side;
  return {box.class_id, tile.x0 + box.cx * s, tile.y0 + box.cy * s, box.w * s, box.h * s,
          box.confidence};
}

BoundingBox normalize_box_to_tile(const TileRecord& tile, const BoundingBox& global) {
  const double s = tile.side;
  return {global.class_id, (global.cx - tile.x0) / s, (global.cy - tile.y0) / s, global.w / s,
          global.h / s, global.confidence};
}

std::string AugmentOp::name() const {
  static const char* names[] = {"identity", "hflip", "vflip", "rot180", "transpose",
                                "antitranspose"};
  std::string n = names[static_cast<int>(geometric)];
  if (scale != 1.0) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "@%.1f", scale);
    n += buf;
  }
  return n;
}

std::pair<ImageBuffer, std::vector<BoundingBox>> augment(const ImageBuffer& img,
                                                         const std::vector<BoundingBox>& boxes,
                                                         const AugmentOp& op) {
  if (std::find(std::begin(kScaleRatios), std::end(kScaleRatios), op.scale) ==
      std::end(kScaleRatios)) {
    throw std::invalid_argument("scale ratio not in the configured set");
  }
  const int w = img.width(), h = img.height(), c = img.channels();
  const bool swap = op.geometric == GeometricOp::kTranspose ||
                    op.geometric == GeometricOp::kAntiTranspose;
  ImageBuffer out(swap ? h : w, swap ? w : h, c);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      int sx = x, sy = y;
      switch (op.geometric) {
        case GeometricOp::kIdentity:
          break;
        case GeometricOp::kHFlip:
          sx = w - 1 - x;
          break;
        case GeometricOp::kVFlip:
          sy = h - 1 - y;
          break;
        case GeometricOp::kRot180:
          sx = w - 1 - x;
          sy = h - 1 - y;
          break;
        case GeometricOp::kTranspose:
          sx = y;
          sy = x;
          break;
        case GeometricOp::kAntiTranspose:
          sx = w - 1 - y;
          sy = h - 1 - x;
          break;
      }
      for (int ch = 0; ch < c; ++ch) out.at(x, y, ch) = img.at(sx, sy, ch);
    }

  std::vector<BoundingBox> out_boxes;
  out_boxes.reserve(boxes.size());
  for (BoundingBox b : boxes) {
    switch (op.geometric) {
      case GeometricOp::kIdentity:
        break;
      case GeometricOp::kHFlip:
        b.cx = 1.0 - b.cx;
        break;
      case GeometricOp::kVFlip:
        b.cy = 1.0 - b.cy;
        break;
      case GeometricOp::kRot180:
        b.cx = 1.0 - b.cx;
        b.cy = 1.0 - b.cy;
        break;
      case GeometricOp::kTranspose:
        std::swap(b.cx, b.cy);
        std::swap(b.w, b.h);
        break;
      case GeometricOp::kAntiTranspose: {
        const double cx = b.cx;
        b.cx = 1.0 - b.cy;
        b.cy = 1.0 - cx;
        std::swap(b.w, b.h);
        break;
      }
    }
    out_boxes.push_back(b);
  }

  if (op.scale != 1.0) {
    const int sw = std::max(1, static_cast<int>(std::lround(out.width() * op.scale)));
    const int sh = std::max(1, static_cast<int>(std::lround(out.height() * op.scale)));
    out = resize(out, sw, sh);
  }
  return {std::move(out), std::move(out_boxes)};
}

std::vector<AugmentOp> default_recipe() {
  std::vector<AugmentOp> recipe;
  for (auto g : {GeometricOp::kIdentity, GeometricOp::kHFlip, GeometricOp::kVFlip,
                 GeometricOp::kRot180, GeometricOp::kTranspose, GeometricOp::kAntiTranspose}) {
    for (double s : kScaleRatios) recipe.push_back({g, s});
  }
  return recipe;
}

std::vector<AugmentedSample> expand_dataset(const std::vector<LabeledImage>& samples,
                                            const std::vector<AugmentOp>& recipe) {
  if (recipe.empty()) throw std::invalid_argument("augmentation recipe is empty");
  std::vector<AugmentedSample> out;
  out.reserve(samples.size() * recipe.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (const auto& op : recipe) {
      auto [img, boxes] = augment(samples[i].image, samples[i].boxes, op);
      out.push_back({{samples[i].id + "_" + op.name(), std::move(img), std::move(boxes)}, i, op});
    }
  }
  return out;
}

void write_labels(const std::vector<BoundingBox>& boxes, const std::filesystem::path& path) {
  write_boxes(boxes, path, false);
}
std::vector<BoundingBox> read_labels(const std::filesystem::path& path) {
  return read_boxes(path, false);
}
void write_predictions(const std::vector<BoundingBox>& boxes, const std::filesystem::path& path) {
  write_boxes(boxes, path, true);
}
std::vector<BoundingBox> read_predictions(const std::filesystem::path& path) {
  return read_boxes(path, true);
}

void write_tile_manifest(const std::vector<TileManifestRow>& rows,
                         const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "source_id,x0,y0,side,tile_path\n";
  for (const auto& r : rows) {
    out << r.tile.source_id << ',' << r.tile.x0 << ',' << r.tile.y0 << ',' << r.tile.side << ','
        << r.tile_path << '\n';
  }
}

std::vector<TileManifestRow> read_tile_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("tile manifest not found: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "source_id,x0,y0,side,tile_path") {
    throw std::runtime_error("unexpected tile manifest header in " + path.string());
  }
  std::vector<TileManifestRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw std::runtime_error("malformed tile manifest row: " + line);
    rows.push_back({{f[0], std::stoi(f[1]), std::stoi(f[2]), std::stoi(f[3])}, f[4]});
  }
  return rows;
}

}  // namespace crabsurvey
