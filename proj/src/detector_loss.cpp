// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "crabsurvey/detector.hpp"
#include "crabsurvey/errors.hpp"

namespace crabsurvey::det {

namespace {

constexpr double kEps = 1e-7;

// Forward-mode value with derivatives along the four predicted corner coordinates.
struct Dual {
  double v = 0.0;
  std::array<double, 4> d{};

  static Dual variable(double value, int index) {
    Dual x{value, {}};
    x.d[index] = 1.0;
    return x;
  }
  static Dual constant(double value) { return {value, {}}; }
};

Dual operator+(const Dual& a, const Dual& b) {
  Dual r{a.v + b.v, {}};
  for (int i = 0; i < 4; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}
Dual operator-(const Dual& a, const Dual& b) {
  Dual r{a.v - b.v, {}};
  for (int i = 0; i < 4; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}
Dual operator*(const Dual& a, const Dual& b) {
  Dual r{a.v * b.v, {}};
  for (int i = 0; i < 4; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}
Dual operator/(const Dual& a, const Dual& b) {
  Dual r{a.v / b.v, {}};
  for (int i = 0; i < 4; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) / (b.v * b.v);
  return r;
}
Dual dmin(const Dual& a, const Dual& b) { return a.v <= b.v ? a : b; }
Dual dmax(const Dual& a, const Dual& b) { return a.v >= b.v ? a : b; }
Dual datan(const Dual& a) {
  Dual r{std::atan(a.v), {}};
  for (int i = 0; i < 4; ++i) r.d[i] = a.d[i] / (1.0 + a.v * a.v);
  return r;
}

// CIoU with the aspect trade-off weight held constant, as is customary.
template <class T>
T ciou_generic(const std::array<T, 4>& p, const std::array<double, 4>& g, double* alpha_out,
               const double* alpha_in) {
  const T eps = T::constant(kEps);
  const T zero = T::constant(0.0);
  const T gx1 = T::constant(g[0]), gy1 = T::constant(g[1]);
  const T gx2 = T::constant(g[2]), gy2 = T::constant(g[3]);
  const T wp = p[2] - p[0], hp = p[3] - p[1] + eps;
  const T wg = gx2 - gx1, hg = gy2 - gy1 + eps;
  const T iw = dmax(zero, dmin(p[2], gx2) - dmax(p[0], gx1));
  const T ih = dmax(zero, dmin(p[3], gy2) - dmax(p[1], gy1));
  const T inter = iw * ih;
  const T uni = wp * hp + wg * hg - inter + eps;
  const T iou = inter / uni;
  const T cw = dmax(p[2], gx2) - dmin(p[0], gx1);
  const T ch = dmax(p[3], gy2) - dmin(p[1], gy1);
  const T c2 = cw * cw + ch * ch + eps;
  const T dx = gx1 + gx2 - p[0] - p[2], dy = gy1 + gy2 - p[1] - p[3];
  const T rho2 = (dx * dx + dy * dy) / T::constant(4.0);
  const T da = datan(wg / hg) - datan(wp / hp);
  const T v = T::constant(4.0 / (std::numbers::pi * std::numbers::pi)) * da * da;
  double alpha;
  if (alpha_in) {
    alpha = *alpha_in;
  } else {
    alpha = v.v / (v.v - iou.v + (1.0 + kEps));
    if (alpha_out) *alpha_out = alpha;
  }
  return iou - (rho2 / c2 + T::constant(alpha) * v);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// BCE with logits, numerically stable.
double bce(double x, double t) {
  return std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
}

struct Anchor {
  std::size_t level;
  std::size_t cell;
  double x, y;  // center, pixels
  double stride;
};

}  // namespace

CIoUResult complete_iou(const std::array<double, 4>& pred, const std::array<double, 4>& target) {
  double alpha = 0.0;
  ciou_generic<Dual>({Dual::constant(pred[0]), Dual::constant(pred[1]), Dual::constant(pred[2]),
                      Dual::constant(pred[3])},
                     target, &alpha, nullptr);
  const std::array<Dual, 4> p = {Dual::variable(pred[0], 0), Dual::variable(pred[1], 1),
                                 Dual::variable(pred[2], 2), Dual::variable(pred[3], 3)};
  const Dual r = ciou_generic<Dual>(p, target, nullptr, &alpha);
  return {r.v, r.d};
}

Tensor detection_loss(const std::vector<LevelOutput>& outputs,
                      const std::vector<std::vector<BoundingBox>>& targets, int input_side,
                      int reg_max, const LossWeights& weights, const AssignerConfig& assigner,
                      LossBreakdown* breakdown) {
  if (outputs.empty()) throw std::invalid_argument("detection_loss: no outputs");
  const int batch = outputs.front().raw.shape().n;
  if (static_cast<int>(targets.size()) != batch) {
    throw std::invalid_argument("detection_loss: one target list per image required");
  }
  const int nc = outputs.front().raw.shape().c - 4 * reg_max;
  if (nc <= 0) throw ShapeError("detection_loss: head has no class channels");

  std::vector<Anchor> anchors;
  for (std::size_t l = 0; l < outputs.size(); ++l) {
    const auto s = outputs[l].raw.shape();
    if (s.n != batch || s.c != 4 * reg_max + nc) throw ShapeError("detection_loss: level mismatch");
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        const double st = outputs[l].stride;
        anchors.push_back({l, static_cast<std::size_t>(y) * s.w + x, (x + 0.5) * st,
                           (y + 0.5) * st, st});
      }
  }
  const std::size_t A = anchors.size();

  std::vector<std::vector<float>> grads(outputs.size());
  for (std::size_t l = 0; l < outputs.size(); ++l) grads[l].assign(outputs[l].raw.numel(), 0.0f);

  // Per-image views into the raw tensors.
  auto logit = [&](int n, const Anchor& a, int channel) {
    const auto s = outputs[a.level].raw.shape();
    return outputs[a.level]
        .raw.data()[(static_cast<std::size_t>(n) * s.c + channel) * s.plane() + a.cell];
  };
  auto grad_at = [&](int n, const Anchor& a, int channel) -> float& {
    const auto s = outputs[a.level].raw.shape();
    return grads[a.level][(static_cast<std::size_t>(n) * s.c + channel) * s.plane() + a.cell];
  };

  struct Positive {
    int image;
    std::size_t anchor;
    std::array<double, 4> gt;  // corners, pixels
    double weight;             // sum of target scores
  };
  std::vector<Positive> positives;
  std::vector<std::vector<double>> target_scores(batch, std::vector<double>(A * nc, 0.0));
  double score_sum = 0.0;

  std::vector<double> probs(reg_max);
  auto side_distribution = [&](int n, const Anchor& a, int side, std::vector<double>& p) {
    double mx = -1e300;
    for (int i = 0; i < reg_max; ++i)
      mx = std::max(mx, static_cast<double>(logit(n, a, side * reg_max + i)));
    double z = 0.0;
    for (int i = 0; i < reg_max; ++i) {
      p[i] = std::exp(logit(n, a, side * reg_max + i) - mx);
      z += p[i];
    }
    double e = 0.0;
    for (int i = 0; i < reg_max; ++i) {
      p[i] /= z;
      e += p[i] * i;
    }
    return e;
  };
  auto predicted_box = [&](int n, const Anchor& a) {
    std::array<double, 4> d;
    for (int side = 0; side < 4; ++side) d[side] = side_distribution(n, a, side, probs);
    return std::array<double, 4>{a.x - d[0] * a.stride, a.y - d[1] * a.stride,
                                 a.x + d[2] * a.stride, a.y + d[3] * a.stride};
  };

  for (int n = 0; n < batch; ++n) {
    const auto& gts = targets[n];
    std::vector<std::array<double, 4>> gt_px;
    for (const auto& g : gts) {
      if (!(g.w > 0) || !(g.h > 0) || g.class_id < 0 || g.class_id >= nc) {
        throw std::invalid_argument("detection_loss: degenerate or out-of-range target box");
      }
      gt_px.push_back({g.x1() * input_side, g.y1() * input_side, g.x2() * input_side,
                       g.y2() * input_side});
    }
    std::vector<std::array<double, 4>> pred(A);
    for (std::size_t i = 0; i < A; ++i) pred[i] = predicted_box(n, anchors[i]);

    // Task-aligned top-k selection per ground truth.
    const std::size_t G = gts.size();
    std::vector<int> owner(A, -1);
    std::vector<double> owner_iou(A, 0.0), owner_align(A, 0.0);
    for (std::size_t g = 0; g < G; ++g) {
      const auto& b = gt_px[g];
      std::vector<std::pair<double, std::size_t>> cand;
      std::vector<double> ious(A, 0.0);
      for (std::size_t i = 0; i < A; ++i) {
        const auto& a = anchors[i];
        const double inside = std::min({a.x - b[0], a.y - b[1], b[2] - a.x, b[3] - a.y});
        if (inside <= 1e-9) continue;
        const double iou = std::max(0.0, complete_iou(pred[i], b).value);
        ious[i] = iou;
        const double score = sigmoid(logit(n, a, 4 * reg_max + gts[g].class_id));
        cand.emplace_back(std::pow(score, assigner.alpha) * std::pow(iou, assigner.beta), i);
      }
      const std::size_t k = std::min<std::size_t>(assigner.top_k, cand.size());
      std::partial_sort(cand.begin(), cand.begin() + k, cand.end(),
                        [](const auto& x, const auto& y) {
                          return x.first > y.first || (x.first == y.first && x.second < y.second);
                        });
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t i = cand[j].second;
        if (owner[i] < 0 || ious[i] > owner_iou[i]) {
          owner[i] = static_cast<int>(g);
          owner_iou[i] = ious[i];
          owner_align[i] = cand[j].first;
        }
      }
    }
    std::vector<double> max_align(G, 0.0), max_iou(G, 0.0);
    for (std::size_t i = 0; i < A; ++i) {
      if (owner[i] < 0) continue;
      max_align[owner[i]] = std::max(max_align[owner[i]], owner_align[i]);
      max_iou[owner[i]] = std::max(max_iou[owner[i]], owner_iou[i]);
    }
    for (std::size_t i = 0; i < A; ++i) {
      if (owner[i] < 0) continue;
      const int g = owner[i];
      const double t = owner_align[i] * max_iou[g] / (max_align[g] + 1e-9);
      target_scores[n][i * nc + gts[g].class_id] = t;
      score_sum += t;
      positives.push_back({n, i, gt_px[g], t});
    }
  }
  const double norm = std::max(score_sum, 1.0);

  LossBreakdown parts;
  parts.positives = static_cast<int>(positives.size());
  for (int n = 0; n < batch; ++n)
    for (std::size_t i = 0; i < A; ++i)
      for (int c = 0; c < nc; ++c) {
        const double x = logit(n, anchors[i], 4 * reg_max + c);
        const double t = target_scores[n][i * nc + c];
        parts.cls += bce(x, t) / norm;
        grad_at(n, anchors[i], 4 * reg_max + c) +=
            static_cast<float>(weights.cls * (sigmoid(x) - t) / norm);
      }

  std::vector<std::vector<double>> side_probs(4, std::vector<double>(reg_max));
  for (const auto& pos : positives) {
    const Anchor& a = anchors[pos.anchor];
    std::array<double, 4> dist;
    for (int side = 0; side < 4; ++side)
      dist[side] = side_distribution(pos.image, a, side, side_probs[side]);
    const std::array<double, 4> pb = {a.x - dist[0] * a.stride, a.y - dist[1] * a.stride,
                                      a.x + dist[2] * a.stride, a.y + dist[3] * a.stride};
    const CIoUResult ciou = complete_iou(pb, pos.gt);
    parts.box += (1.0 - ciou.value) * pos.weight / norm;
    // d(corner)/d(distance): x1 = ax - l*s, y1 = ay - t*s, x2 = ax + r*s, y2 = ay + b*s.
    const std::array<double, 4> dcorner = {-a.stride, -a.stride, a.stride, a.stride};

    const std::array<double, 4> target_dist = {
        (a.x - pos.gt[0]) / a.stride, (a.y - pos.gt[1]) / a.stride, (pos.gt[2] - a.x) / a.stride,
        (pos.gt[3] - a.y) / a.stride};
    for (int side = 0; side < 4; ++side) {
      const auto& p = side_probs[side];
      const double dloss_ddist = -ciou.grad[side] * dcorner[side] * pos.weight / norm;
      const double t = std::clamp(target_dist[side], 0.0, reg_max - 1 - 0.01);
      const int tl = static_cast<int>(std::floor(t));
      const double wl = (tl + 1) - t, wr = 1.0 - wl;
      parts.dfl +=
          -(wl * std::log(std::max(p[tl], 1e-12)) + wr * std::log(std::max(p[tl + 1], 1e-12))) /
          4.0 * pos.weight / norm;
      for (int i = 0; i < reg_max; ++i) {
        const double box_grad = dloss_ddist * p[i] * (i - dist[side]);
        const double onehot = (i == tl ? wl : 0.0) + (i == tl + 1 ? wr : 0.0);
        const double dfl_grad = (p[i] - onehot) / 4.0 * pos.weight / norm;
        grad_at(pos.image, a, side * reg_max + i) +=
            static_cast<float>(weights.box * box_grad + weights.dfl * dfl_grad);
      }
    }
  }

  if (breakdown) *breakdown = parts;
  const double total = weights.box * parts.box + weights.cls * parts.cls + weights.dfl * parts.dfl;
  std::vector<Tensor> parents;
  std::vector<nn::Node*> nodes;
  for (const auto& o : outputs) {
    parents.push_back(o.raw);
    nodes.push_back(o.raw.node());
  }
  return nn::make_result(nn::Shape{1, 1, 1, 1}, {static_cast<float>(total)}, parents,
                         [nodes, grads = std::move(grads)](nn::Node& self) {
                           const float up = self.grad[0];
                           for (std::size_t l = 0; l < nodes.size(); ++l) {
                             if (!nodes[l]->requires_grad) continue;
                             auto& g = nodes[l]->ensure_grad();
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * grads[l][i];
                           }
                         });
}

}  // namespace crabsurvey::det
