// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "crabsurvey/imaging.hpp"
#include "crabsurvey/tiling.hpp"

namespace crabsurvey::survey {

/// Detections of one tile, normalized to that tile.
struct TileDetections {
  TileRecord tile;
  std::vector<BoundingBox> boxes;
};

inline constexpr double kDefaultMergeIou = 0.5;

/// Remaps every tile's boxes to frame pixels and removes cross-tile duplicates with
/// class-wise NMS. Survivors keep class and confidence. Throws std::invalid_argument
/// when tiles come from different frames.
std::vector<BoundingBox> merge_tile_detections(const std::vector<TileDetections>& tiles,
                                               double merge_iou = kDefaultMergeIou);

/// Metres per pixel for a nadir camera: 2 h tan(fov / 2) / pixel_width.
double ground_sample_distance(double altitude_m, double fov_deg, int pixel_width);

/// Per-class detection counts on a regular grid over a frame.
///
/// A center at x falls in column ceil((x - origin_x) / cell) - 1, clamped to the grid, so
/// centers on a boundary go to the lower-index cell and centers outside the frame go to
/// the nearest edge cell.
class DensityGrid {
 public:
  DensityGrid(int frame_width, int frame_height, int cell_size, int origin_x = 0,
              int origin_y = 0);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int cell_size() const { return cell_; }
  int origin_x() const { return origin_x_; }
  int origin_y() const { return origin_y_; }

  /// Returns the (row, col) that received the detection.
  std::pair<int, int> add(const BoundingBox& frame_box);
  long count(int row, int col, int class_id) const;
  long total(int row, int col) const;
  long class_total(int class_id) const;
  long total() const;

 private:
  int index(int row, int col) const;
  int rows_, cols_, cell_, origin_x_, origin_y_;
  std::vector<std::array<long, kNumClasses>> counts_;
};

/// Throws std::invalid_argument on a nonpositive cell size or frame extent.
DensityGrid build_density_map(const std::vector<BoundingBox>& frame_boxes, int cell_size,
                              int frame_width, int frame_height);

/// CSV "row,col,underwater,on_sand,total,density_per_m2" in row-major order. Density uses
/// the cell footprint (cell_size * gsd)^2 and is "nan" when gsd <= 0.
void write_density_csv(const DensityGrid& grid, const std::filesystem::path& path,
                       double gsd_m = 0.0);

/// Totals read back from a density CSV: {underwater, on_sand, total}.
std::array<long, 3> density_csv_totals(const std::filesystem::path& path);

/// Linear ramp from a dark background (zero) to hot yellow (the grid maximum).
/// Each cell becomes a px_per_cell square block.
ImageBuffer render_heatmap(const DensityGrid& grid, int px_per_cell = 8);

/// Writes the heatmap PNG and its sidecar CSV (same stem, ".csv").
void save_heatmap(const DensityGrid& grid, const std::filesystem::path& png_path,
                  double gsd_m = 0.0, int px_per_cell = 8);

/// Record of one CLI run, written as JSON next to its outputs.
struct RunManifest {
  std::string command;
  std::string tool_version;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;
  /// Input path -> FNV-1a of its bytes (directories hash their sorted file list).
  std::map<std::string, std::string> input_fingerprints;
  std::vector<std::pair<std::string, double>> stage_seconds;
  std::vector<std::string> outputs;

  void add_input(const std::filesystem::path& path);
  std::string to_json() const;
  void write(const std::filesystem::path& path) const;
};

/// FNV-1a of a file, or of a directory's sorted relative paths and file contents.
std::string fingerprint_path(const std::filesystem::path& path);

}  // namespace crabsurvey::survey
