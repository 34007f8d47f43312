// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include "crabsurvey/det_eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "crabsurvey/iq_metrics.hpp"
#include "json.hpp"

namespace crabsurvey::eval {

namespace {

std::vector<std::size_t> confidence_order(const std::vector<BoundingBox>& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].confidence > dets[b].confidence;
  });
  return order;
}

// Best unmatched ground truth for `det`; same_class_only restricts the candidates.
int best_match(const BoundingBox& det, const std::vector<BoundingBox>& gts,
               const std::vector<bool>& taken, double threshold, bool same_class_only) {
  int best = -1;
  double best_iou = threshold;
  for (std::size_t j = 0; j < gts.size(); ++j) {
    if (taken[j] || (same_class_only && gts[j].class_id != det.class_id)) continue;
    const double v = iou(det, gts[j]);
    if (v >= best_iou && (best < 0 || v > best_iou)) {
      best = static_cast<int>(j);
      best_iou = v;
    }
  }
  return best;
}

}  // namespace

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double area_a = a.area(), area_b = b.area();
  if (!(area_a > 0) || !(area_b > 0)) return 0.0;
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (area_a + area_b - inter);
}

long ConfusionMatrix::total() const {
  long t = 0;
  for (const auto& row : counts) t += std::accumulate(row.begin(), row.end(), 0L);
  return t;
}

long ConfusionMatrix::row_sum(int predicted) const {
  const auto& row = counts.at(predicted);
  return std::accumulate(row.begin(), row.end(), 0L);
}

long ConfusionMatrix::column_sum(int actual) const {
  long t = 0;
  for (const auto& row : counts) t += row.at(actual);
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) counts[i][j] += other.counts[i][j];
  return *this;
}

void MatchResult::merge(const MatchResult& other) {
  outcomes.insert(outcomes.end(), other.outcomes.begin(), other.outcomes.end());
  std::stable_sort(outcomes.begin(), outcomes.end(),
                   [](const DetectionOutcome& a, const DetectionOutcome& b) {
                     return a.confidence > b.confidence;
                   });
  for (int c = 0; c < kNumClasses; ++c) num_ground_truth[c] += other.num_ground_truth[c];
  confusion += other.confusion;
}

MatchResult match_detections(const std::vector<BoundingBox>& detections,
                             const std::vector<BoundingBox>& ground_truth, double iou_threshold) {
  for (const auto& b : detections) {
    if (b.class_id < 0 || b.class_id >= kNumClasses) throw std::invalid_argument("bad det class");
  }
  MatchResult result;
  for (const auto& g : ground_truth) {
    if (g.class_id < 0 || g.class_id >= kNumClasses) throw std::invalid_argument("bad gt class");
    ++result.num_ground_truth[g.class_id];
  }
  const auto order = confidence_order(detections);

  std::vector<bool> taken(ground_truth.size(), false);
  for (std::size_t i : order) {
    const auto& det = detections[i];
    const int j = best_match(det, ground_truth, taken, iou_threshold, true);
    if (j >= 0) taken[j] = true;
    result.outcomes.push_back({det.class_id, det.confidence, j >= 0});
  }

  std::vector<bool> used(ground_truth.size(), false);
  auto& cm = result.confusion.counts;
  for (std::size_t i : order) {
    const auto& det = detections[i];
    int j = best_match(det, ground_truth, used, iou_threshold, true);
    if (j < 0) j = best_match(det, ground_truth, used, iou_threshold, false);
    if (j >= 0) {
      used[j] = true;
      ++cm[det.class_id][ground_truth[j].class_id];
    } else {
      ++cm[det.class_id][ConfusionMatrix::kBackground];
    }
  }
  for (std::size_t j = 0; j < ground_truth.size(); ++j) {
    if (!used[j]) ++cm[ConfusionMatrix::kBackground][ground_truth[j].class_id];
  }
  return result;
}

ClassScores scores_from_counts(long tp, long fp, long fn) {
  ClassScores s;
  s.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : (fn == 0 ? 1.0 : 0.0);
  s.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : (fp == 0 ? 1.0 : 0.0);
  const double denom = s.precision + s.recall;
  s.f1 = denom > 0 ? 2.0 * s.precision * s.recall / denom : 0.0;
  return s;
}

std::array<ClassScores, kNumClasses> precision_recall_f1(const MatchResult& match) {
  std::array<ClassScores, kNumClasses> out;
  for (int c = 0; c < kNumClasses; ++c) {
    long tp = 0, fp = 0;
    for (const auto& o : match.outcomes) {
      if (o.class_id != c) continue;
      (o.true_positive ? tp : fp)++;
    }
    out[c] = scores_from_counts(tp, fp, match.num_ground_truth[c] - tp);
  }
  return out;
}

std::array<ClassScores, kNumClasses> precision_recall_f1(const ConfusionMatrix& cm) {
  std::array<ClassScores, kNumClasses> out;
  for (int c = 0; c < kNumClasses; ++c) {
    const long tp = cm.counts[c][c];
    out[c] = scores_from_counts(tp, cm.row_sum(c) - tp, cm.column_sum(c) - tp);
  }
  return out;
}

PRCurve build_pr_curve(std::span<const DetectionOutcome> outcomes, int class_id,
                       long num_ground_truth) {
  PRCurve curve;
  curve.num_ground_truth = num_ground_truth;
  long tp = 0, fp = 0;
  for (const auto& o : outcomes) {
    if (o.class_id != class_id) continue;
    (o.true_positive ? tp : fp)++;
    curve.recall.push_back(num_ground_truth > 0 ? static_cast<double>(tp) / num_ground_truth : 0.0);
    curve.precision.push_back(static_cast<double>(tp) / (tp + fp));
  }
  curve.interpolated = curve.precision;
  for (std::size_t i = curve.interpolated.size(); i-- > 1;) {
    curve.interpolated[i - 1] = std::max(curve.interpolated[i - 1], curve.interpolated[i]);
  }
  return curve;
}

std::optional<double> average_precision(const PRCurve& curve) {
  if (curve.num_ground_truth <= 0) return std::nullopt;
  // Precision is recomputed from integer counts in extended precision and the sum is
  // rounded once, so rational cases come out correctly rounded.
  const std::size_t n = curve.recall.size();
  const long double g = static_cast<long double>(curve.num_ground_truth);
  std::vector<long> tp(n);
  std::vector<long double> envelope(n);
  for (std::size_t i = 0; i < n; ++i) {
    tp[i] = std::lround(curve.recall[i] * static_cast<double>(curve.num_ground_truth));
    envelope[i] = static_cast<long double>(tp[i]) / static_cast<long double>(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) envelope[i - 1] = std::max(envelope[i - 1], envelope[i]);
  long double weighted = 0.0L;
  long prev_tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tp[i] > prev_tp) {
      weighted += static_cast<long double>(tp[i] - prev_tp) * envelope[i];
      prev_tp = tp[i];
    }
  }
  const double ap = static_cast<double>(weighted / g);
  return ap;
}

double mean_ap(std::span<const std::optional<double>> per_class_ap) {
  double total = 0.0;
  int n = 0;
  for (const auto& ap : per_class_ap) {
    if (!ap) continue;
    total += *ap;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("mean AP needs at least one class with ground truth");
  return total / n;
}

EvalReport evaluate(const MatchResult& match) {
  EvalReport report;
  report.confusion = match.confusion;
  const auto scores = precision_recall_f1(match);
  std::array<std::optional<double>, kNumClasses> aps;
  long tp = 0, fp = 0, fn = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    auto& cr = report.classes[c];
    cr.class_id = c;
    cr.scores = scores[c];
    cr.num_ground_truth = match.num_ground_truth[c];
    long ctp = 0;
    for (const auto& o : match.outcomes) {
      if (o.class_id != c) continue;
      ++cr.num_detections;
      if (o.true_positive) ++ctp;
    }
    tp += ctp;
    fp += cr.num_detections - ctp;
    fn += cr.num_ground_truth - ctp;
    cr.ap50 = average_precision(build_pr_curve(match.outcomes, c, cr.num_ground_truth));
    aps[c] = cr.ap50;
  }
  report.overall = scores_from_counts(tp, fp, fn);
  if (std::any_of(aps.begin(), aps.end(), [](const auto& a) { return a.has_value(); })) {
    report.map50 = mean_ap(aps);
  }
  return report;
}

EvalReport evaluate_dataset(const std::vector<std::vector<BoundingBox>>& detections,
                            const std::vector<std::vector<BoundingBox>>& ground_truth,
                            double iou_threshold) {
  if (detections.size() != ground_truth.size()) {
    throw std::invalid_argument("detections and ground truth cover different image counts");
  }
  MatchResult all;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    all.merge(match_detections(detections[i], ground_truth[i], iou_threshold));
  }
  return evaluate(all);
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  for (const auto& c : classes) {
    nlohmann::ordered_json cj;
    cj["class_id"] = c.class_id;
    cj["precision"] = c.scores.precision;
    cj["recall"] = c.scores.recall;
    cj["f1"] = c.scores.f1;
    cj["ap50"] = c.ap50 ? nlohmann::ordered_json(*c.ap50) : nlohmann::ordered_json(nullptr);
    cj["ground_truth"] = c.num_ground_truth;
    cj["detections"] = c.num_detections;
    j["classes"][class_name(c.class_id)] = cj;
  }
  j["overall"] = {{"precision", overall.precision}, {"recall", overall.recall}, {"f1", overall.f1}};
  j["map50"] = map50 ? nlohmann::ordered_json(*map50) : nlohmann::ordered_json(nullptr);
  j["confusion_matrix"] = {
      {"TP1", confusion.tp1()}, {"FP1", confusion.fp1()}, {"FP2", confusion.fp2()},
      {"FN1", confusion.fn1()}, {"TP2", confusion.tp2()}, {"FP3", confusion.fp3()},
      {"FN2", confusion.fn2()}, {"FN3", confusion.fn3()}, {"TN", confusion.tn()}};
  return j.dump(2);
}

std::string eval_csv_header() {
  return "method,testset,precision,recall,f1,ap50_underwater,ap50_on_sand,map50";
}

std::string eval_csv_row(const std::string& method, const std::string& testset,
                         const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? iq::format_number(*v) : std::string("nan");
  };
  return method + ',' + testset + ',' + iq::format_number(r.overall.precision) + ',' +
         iq::format_number(r.overall.recall) + ',' + iq::format_number(r.overall.f1) + ',' +
         opt(r.classes[0].ap50) + ',' + opt(r.classes[1].ap50) + ',' + opt(r.map50);
}

}  // namespace crabsurvey::eval
