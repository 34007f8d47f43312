// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "crabsurvey/det_eval.hpp"
#include "crabsurvey/detector.hpp"
#include "crabsurvey/srr.hpp"
#include "crabsurvey/tiling.hpp"

namespace crabsurvey::harness {

/// Every PNG in `dir` (sorted by name) with labels from the same-stem ".txt".
/// MissingInputError if the directory is absent, holds no PNG, or a label file is missing.
std::vector<LabeledImage> load_labeled_dir(const std::filesystem::path& dir);
/// Writes "<id>.png" and "<id>.txt" per sample.
void save_labeled_dir(const std::vector<LabeledImage>& samples, const std::filesystem::path& dir);

/// A result table: CSV for diffing and an aligned text view for reading.
/// Footer lines carry reference annotations and appear only in the text view.
struct Table {
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> footer;

  std::string to_csv() const;
  std::string render_text() const;
  /// Writes `<stem>.csv` and `<stem>.txt` into `dir`; returns both paths.
  std::vector<std::filesystem::path> write(const std::filesystem::path& dir,
                                           const std::string& stem) const;
};

/// Learned methods in reporting order; bicubic always precedes them.
inline constexpr srr::SRArchitecture kBenchmarkOrder[] = {
    srr::SRArchitecture::kSRCNN, srr::SRArchitecture::kSRFBN, srr::SRArchitecture::kEDSR,
    srr::SRArchitecture::kRCAN, srr::SRArchitecture::kRDN};

struct SRBenchmark {
  /// method, psnr_db, ssim.
  Table image_quality;
  /// Detection scores per reconstructed test set plus the HR reference row.
  /// Empty when no detector is given.
  Table detection;
};

/// Degrades each HR test image by `magnification`, reconstructs it with bicubic and every
/// supplied model, and scores the reconstructions against HR. HR sides must be divisible by
/// `magnification` (ShapeError) so labels stay valid. Models must match `magnification`
/// (ConfigError otherwise); an empty test set is a MissingInputError.
SRBenchmark run_srr_benchmark(const std::vector<LabeledImage>& hr_test,
                              const std::map<srr::SRArchitecture, const srr::SRModel*>& models,
                              int magnification, const det::Detector* detector = nullptr,
                              double eval_iou = 0.5);

struct AblationRow {
  std::string name;
  det::DetectorConfig config;
  std::size_t parameters = 0;
  eval::EvalReport report;
};

/// Trains the four lattice variants (baseline, +extra head, +GSConv, +ECA) from `base`
/// (sizes and decoding thresholds are kept, the three flags are overridden) and scores
/// each on `test`.
std::vector<AblationRow> run_ablation(const std::vector<LabeledImage>& train,
                                      const std::vector<LabeledImage>& test,
                                      const det::DetectorConfig& base,
                                      const det::DetTrainConfig& train_cfg,
                                      double eval_iou = 0.5);
Table ablation_table(const std::vector<AblationRow>& rows);

struct SweepRow {
  std::string setting;
  int magnification = 1;
  int width = 0;
  int height = 0;
  eval::EvalReport report;
};

struct MagnificationSweep {
  std::vector<SweepRow> rows;
  /// Magnification of the best map50 row (1 when raw LR wins).
  int peak_magnification = 1;
  Table table() const;
};

/// Row x1-LR scores the LR set as given; row xm-SR reconstructs it with models.at(m).
/// A magnification without a model is a MissingInputError.
MagnificationSweep run_magnification_sweep(const std::vector<LabeledImage>& lr_test,
                                           const std::map<int, const srr::SRModel*>& models,
                                           const det::Detector& detector,
                                           const std::vector<int>& magnifications = {2, 3, 4, 5},
                                           double eval_iou = 0.5);

/// Checkpoint file names used by the CLI: "<arch>_x<m>.ckpt" and "detector.ckpt".
std::string sr_checkpoint_name(srr::SRArchitecture arch, int magnification);
inline constexpr const char* kDetectorCheckpoint = "detector.ckpt";

}  // namespace crabsurvey::harness
