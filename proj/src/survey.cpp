// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include "crabsurvey/survey.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "crabsurvey/detector.hpp"
#include "crabsurvey/errors.hpp"
#include "crabsurvey/iq_metrics.hpp"
#include "crabsurvey/nn/checkpoint.hpp"

namespace crabsurvey::survey {

std::vector<BoundingBox> merge_tile_detections(const std::vector<TileDetections>& tiles,
                                               double merge_iou) {
  if (!(merge_iou >= 0.0 && merge_iou <= 1.0)) {
    throw std::invalid_argument("merge_iou must be in [0, 1]");
  }
  std::vector<BoundingBox> global;
  for (const auto& t : tiles) {
    if (t.tile.source_id != tiles.front().tile.source_id) {
      throw std::invalid_argument("merge_tile_detections: tiles from different frames (" +
                                  tiles.front().tile.source_id + ", " + t.tile.source_id + ")");
    }
    for (const auto& b : t.boxes) global.push_back(remap_box_to_global(t.tile, b));
  }
  return det::nms(std::move(global), merge_iou);
}

double ground_sample_distance(double altitude_m, double fov_deg, int pixel_width) {
  if (!(altitude_m > 0) || !(fov_deg > 0 && fov_deg < 180) || pixel_width <= 0) {
    throw std::invalid_argument(
        "ground_sample_distance: need altitude > 0, 0 < fov < 180, width > 0");
  }
  return 2.0 * altitude_m * std::tan(fov_deg * std::numbers::pi / 360.0) / pixel_width;
}

DensityGrid::DensityGrid(int frame_width, int frame_height, int cell_size, int origin_x,
                         int origin_y)
    : cell_(cell_size), origin_x_(origin_x), origin_y_(origin_y) {
  if (cell_size <= 0) throw std::invalid_argument("density cell size must be positive");
  if (frame_width <= 0 || frame_height <= 0) {
    throw std::invalid_argument("density frame extent must be positive");
  }
  cols_ = (frame_width + cell_size - 1) / cell_size;
  rows_ = (frame_height + cell_size - 1) / cell_size;
  counts_.assign(static_cast<std::size_t>(rows_) * cols_, {});
}

int DensityGrid::index(int row, int col) const {
  if (row < 0 || row >= rows_ || col < 0 || col >= cols_) {
    throw std::out_of_range("density cell out of range");
  }
  return row * cols_ + col;
}

std::pair<int, int> DensityGrid::add(const BoundingBox& b) {
  if (b.class_id < 0 || b.class_id >= kNumClasses) {
    throw std::invalid_argument("density: class id out of range");
  }
  auto cell_of = [&](double v, int origin, int n) {
    const int k = static_cast<int>(std::ceil((v - origin) / cell_)) - 1;
    return std::clamp(k, 0, n - 1);
  };
  const int col = cell_of(b.cx, origin_x_, cols_);
  const int row = cell_of(b.cy, origin_y_, rows_);
  ++counts_[index(row, col)][b.class_id];
  return {row, col};
}

long DensityGrid::count(int row, int col, int class_id) const {
  return counts_[index(row, col)].at(class_id);
}

long DensityGrid::total(int row, int col) const {
  const auto& c = counts_[index(row, col)];
  return c[0] + c[1];
}

long DensityGrid::class_total(int class_id) const {
  long s = 0;
  for (const auto& c : counts_) s += c.at(class_id);
  return s;
}

long DensityGrid::total() const { return class_total(0) + class_total(1); }

DensityGrid build_density_map(const std::vector<BoundingBox>& frame_boxes, int cell_size,
                              int frame_width, int frame_height) {
  DensityGrid grid(frame_width, frame_height, cell_size);
  for (const auto& b : frame_boxes) grid.add(b);
  return grid;
}

void write_density_csv(const DensityGrid& grid, const std::filesystem::path& path,
                       double gsd_m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const double area = gsd_m > 0 ? std::pow(grid.cell_size() * gsd_m, 2) : 0.0;
  out << "row,col,underwater,on_sand,total,density_per_m2\n";
  for (int r = 0; r < grid.rows(); ++r)
    for (int c = 0; c < grid.cols(); ++c) {
      const long t = grid.total(r, c);
      out << r << ',' << c << ',' << grid.count(r, c, 0) << ',' << grid.count(r, c, 1) << ','
          << t << ',' << (area > 0 ? iq::format_number(t / area) : std::string("nan")) << '\n';
    }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::array<long, 3> density_csv_totals(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("density CSV not found: " + path.string());
  std::string line;
  std::getline(in, line);
  std::array<long, 3> sums{};
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string field;
    for (int i = 0; i < 5 && std::getline(is, field, ','); ++i) {
      if (i >= 2) sums[i - 2] += std::stol(field);
    }
  }
  return sums;
}

ImageBuffer render_heatmap(const DensityGrid& grid, int px_per_cell) {
  if (px_per_cell <= 0) throw std::invalid_argument("px_per_cell must be positive");
  constexpr double kCold[3] = {0.05, 0.07, 0.20};
  constexpr double kHot[3] = {1.00, 0.90, 0.10};
  long peak = 0;
  for (int r = 0; r < grid.rows(); ++r)
    for (int c = 0; c < grid.cols(); ++c) peak = std::max(peak, grid.total(r, c));
  ImageBuffer img(grid.cols() * px_per_cell, grid.rows() * px_per_cell, 3);
  for (int r = 0; r < grid.rows(); ++r)
    for (int c = 0; c < grid.cols(); ++c) {
      const double t = peak > 0 ? static_cast<double>(grid.total(r, c)) / peak : 0.0;
      for (int y = 0; y < px_per_cell; ++y)
        for (int x = 0; x < px_per_cell; ++x)
          for (int ch = 0; ch < 3; ++ch) {
            img.at(c * px_per_cell + x, r * px_per_cell + y, ch) =
                kCold[ch] + t * (kHot[ch] - kCold[ch]);
          }
    }
  return img;
}

void save_heatmap(const DensityGrid& grid, const std::filesystem::path& png_path, double gsd_m,
                  int px_per_cell) {
  save_image(render_heatmap(grid, px_per_cell), png_path);
  auto csv = png_path;
  csv.replace_extension(".csv");
  write_density_csv(grid, csv, gsd_m);
}

std::string fingerprint_path(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw MissingInputError("input not found: " + path.string());
  auto read_all = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  if (!fs::is_directory(path)) return nn::fnv1a_hex(read_all(path));
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(path)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& f : files) {
    acc += fs::relative(f, path).generic_string();
    acc += '\0';
    acc += nn::fnv1a_hex(read_all(f));
    acc += '\n';
  }
  return nn::fnv1a_hex(acc);
}

void RunManifest::add_input(const std::filesystem::path& path) {
  input_fingerprints[path.string()] = fingerprint_path(path);
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["tool_version"] = tool_version;
  j["seed"] = seed;
  j["config"] = config;
  j["inputs"] = input_fingerprints;
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const auto& [name, secs] : stage_seconds)
    stages.push_back({{"stage", name}, {"seconds", secs}});
  j["stages"] = stages;
  j["outputs"] = outputs;
  return j.dump(2);
}

void RunManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json() << '\n';
}

}  // namespace crabsurvey::survey
