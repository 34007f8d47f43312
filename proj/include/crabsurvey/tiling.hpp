// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "crabsurvey/imaging.hpp"

namespace crabsurvey {

/// Box class labels.
enum class CrabClass : int { kUnderwater = 0, kOnSand = 1 };
inline constexpr int kNumClasses = 2;
const char* class_name(int class_id);

/// Center/size box. Units are either normalized to a tile side or frame pixels,
/// depending on context; ground truth carries confidence 1.
struct BoundingBox {
  int class_id = 0;
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  double confidence = 1.0;

  double x1() const { return cx - w / 2; }
  double y1() const { return cy - h / 2; }
  double x2() const { return cx + w / 2; }
  double y2() const { return cy + h / 2; }
  double area() const { return w * h; }
  static BoundingBox from_corners(int class_id, double x1, double y1, double x2, double y2,
                                  double confidence = 1.0);
  bool operator==(const BoundingBox&) const = default;
};

/// Clip to [lo, hi] on both axes. Returns false if nothing positive-area remains.
bool clip_box(BoundingBox& box, double lo = 0.0, double hi = 1.0);

enum class EdgePolicy { kDropPartial, kPadReflect };

struct TileGrid {
  int window = 640;
  int stride = 320;
  EdgePolicy edge_policy = EdgePolicy::kDropPartial;
};

struct TileRecord {
  std::string source_id;
  int x0 = 0;
  int y0 = 0;
  int side = 0;
  bool operator==(const TileRecord&) const = default;
};

/// Row-major tile plan. Under drop_partial only full windows are emitted; under
/// pad_reflect a final window is shifted flush to each frame edge, and frames smaller
/// than the window get a single reflect-padded tile at the origin.
std::vector<TileRecord> plan_tiles(int frame_w, int frame_h, const TileGrid& grid,
                                   const std::string& source_id = "frame");

/// Pixels of `tile`; positions outside the frame are mirrored (reflect-101).
ImageBuffer extract_tile(const ImageBuffer& frame, const TileRecord& tile);

/// Frame-pixel boxes -> tile-normalized labels. Boxes keeping less than
/// `min_visible_fraction` of their area after clipping are dropped.
std::vector<BoundingBox> labels_for_tile(const std::vector<BoundingBox>& frame_boxes,
                                         const TileRecord& tile,
                                         double min_visible_fraction = 0.2);

/// Tile-normalized box -> frame pixels. Class and confidence are preserved.
BoundingBox remap_box_to_global(const TileRecord& tile, const BoundingBox& box);
/// Inverse of remap_box_to_global.
BoundingBox normalize_box_to_tile(const TileRecord& tile, const BoundingBox& global);

enum class GeometricOp { kIdentity, kHFlip, kVFlip, kRot180, kTranspose, kAntiTranspose };

struct AugmentOp {
  GeometricOp geometric = GeometricOp::kIdentity;
  /// Canvas scale ratio; 1 keeps the size.
  double scale = 1.0;
  std::string name() const;
  bool operator==(const AugmentOp&) const = default;
};

/// Scale ratios accepted by AugmentOp.
inline constexpr double kScaleRatios[] = {1.0, 0.6, 0.7, 0.8, 0.9};

/// Applies `op` to pixels and labels together. Geometric ops are label-exact; scale
/// resizes the canvas to round(side * r) and leaves normalized labels unchanged.
std::pair<ImageBuffer, std::vector<BoundingBox>> augment(const ImageBuffer& img,
                                                         const std::vector<BoundingBox>& boxes,
                                                         const AugmentOp& op);

/// 6 geometric ops x 5 scale ratios = 30 ops, geometric-major.
std::vector<AugmentOp> default_recipe();

struct LabeledImage {
  std::string id;
  ImageBuffer image;
  std::vector<BoundingBox> boxes;
};

struct AugmentedSample {
  LabeledImage sample;
  std::size_t source_index = 0;
  AugmentOp op;
};

/// Every (sample, op) pair in sample-major order. Throws on an empty recipe.
std::vector<AugmentedSample> expand_dataset(const std::vector<LabeledImage>& samples,
                                            const std::vector<AugmentOp>& recipe);

/// "class_id cx cy w h" per line.
void write_labels(const std::vector<BoundingBox>& boxes, const std::filesystem::path& path);
std::vector<BoundingBox> read_labels(const std::filesystem::path& path);
/// "class_id cx cy w h confidence" per line.
void write_predictions(const std::vector<BoundingBox>& boxes, const std::filesystem::path& path);
std::vector<BoundingBox> read_predictions(const std::filesystem::path& path);

struct TileManifestRow {
  TileRecord tile;
  std::string tile_path;
};
/// CSV with header source_id,x0,y0,side,tile_path.
void write_tile_manifest(const std::vector<TileManifestRow>& rows,
                         const std::filesystem::path& path);
std::vector<TileManifestRow> read_tile_manifest(const std::filesystem::path& path);

}  // namespace crabsurvey
