// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crabsurvey/tiling.hpp"

namespace crabsurvey::eval {

/// Intersection over union; 0 when either box has zero area.
double iou(const BoundingBox& a, const BoundingBox& b);

/// Object-level confusion tally over {underwater, on_sand, background}.
///
/// Indexed counts[predicted][actual]; this is the orientation in which the row sums are
/// the "Predicted ..." totals and the column sums the "Actual ..." totals:
///
///                 actual uw   actual sand   actual bg
///   pred uw         TP1          FP1          FP2
///   pred sand       FN1          TP2          FP3
///   pred bg         FN2          FN3          TN
///
/// Object-level matching never produces a background/background event, so TN stays 0
/// unless a caller adds pixel-level counts.
struct ConfusionMatrix {
  static constexpr int kBackground = 2;
  std::array<std::array<long, 3>, 3> counts{};

  long tp1() const { return counts[0][0]; }
  long fp1() const { return counts[0][1]; }
  long fp2() const { return counts[0][2]; }
  long fn1() const { return counts[1][0]; }
  long tp2() const { return counts[1][1]; }
  long fp3() const { return counts[1][2]; }
  long fn2() const { return counts[2][0]; }
  long fn3() const { return counts[2][1]; }
  long tn() const { return counts[2][2]; }

  long predicted_underwater() const { return tp1() + fp1() + fp2(); }
  long predicted_on_sand() const { return fn1() + tp2() + fp3(); }
  long predicted_background() const { return fn2() + fn3() + tn(); }
  long actual_underwater() const { return tp1() + fn1() + fn2(); }
  long actual_on_sand() const { return fp1() + tp2() + fn3(); }
  long actual_background() const { return fp2() + fp3() + tn(); }
  long total() const;

  long row_sum(int predicted) const;
  long column_sum(int actual) const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

struct DetectionOutcome {
  int class_id = 0;
  double confidence = 0.0;
  bool true_positive = false;
};

struct MatchResult {
  /// Class-aware outcomes in descending confidence (stable on ties).
  std::vector<DetectionOutcome> outcomes;
  std::array<long, kNumClasses> num_ground_truth{};
  ConfusionMatrix confusion;

  /// Appends another image's result; outcomes are re-sorted stably by confidence.
  void merge(const MatchResult& other);
};

/// Greedy matching in descending confidence. For AP each detection takes the best-IoU
/// unmatched ground truth of its own class with IoU >= threshold. The confusion matrix
/// is filled by a second, class-confusable pass that prefers a same-class match and
/// falls back to the best-IoU unmatched ground truth of any class.
MatchResult match_detections(const std::vector<BoundingBox>& detections,
                             const std::vector<BoundingBox>& ground_truth,
                             double iou_threshold = 0.5);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R).
/// Empty denominators: P (resp. R) is 1 when the opposing error count is also zero and
/// 0 otherwise; F1 is 0 when P + R = 0.
ClassScores scores_from_counts(long tp, long fp, long fn);
std::array<ClassScores, kNumClasses> precision_recall_f1(const MatchResult& match);
std::array<ClassScores, kNumClasses> precision_recall_f1(const ConfusionMatrix& cm);

struct PRCurve {
  std::vector<double> recall;
  std::vector<double> precision;
  /// max precision at recall >= r, per point.
  std::vector<double> interpolated;
  long num_ground_truth = 0;
};

/// Curve of one class from confidence-sorted outcomes (other classes are ignored).
PRCurve build_pr_curve(std::span<const DetectionOutcome> outcomes, int class_id,
                       long num_ground_truth);

/// All-point interpolated AP. nullopt when the class has no ground truth.
std::optional<double> average_precision(const PRCurve& curve);

/// Mean over classes that have ground truth. Throws if none do.
double mean_ap(std::span<const std::optional<double>> per_class_ap);

struct ClassReport {
  int class_id = 0;
  ClassScores scores;
  std::optional<double> ap50;
  long num_ground_truth = 0;
  long num_detections = 0;
};

struct EvalReport {
  std::array<ClassReport, kNumClasses> classes;
  std::optional<double> map50;
  ClassScores overall;
  ConfusionMatrix confusion;

  std::string to_json() const;
};

EvalReport evaluate(const MatchResult& match);

/// Matches each image separately, merges, and evaluates.
EvalReport evaluate_dataset(const std::vector<std::vector<BoundingBox>>& detections,
                            const std::vector<std::vector<BoundingBox>>& ground_truth,
                            double iou_threshold = 0.5);

/// CSV header for per-(method, testset) rows.
std::string eval_csv_header();
std::string eval_csv_row(const std::string& method, const std::string& testset,
                         const EvalReport& report);

}  // namespace crabsurvey::eval
