// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include "crabsurvey/detector.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "crabsurvey/det_eval.hpp"
#include "crabsurvey/errors.hpp"
#include "crabsurvey/srr.hpp"
#include "crabsurvey/synthetic.hpp"

namespace crabsurvey::det {
namespace {

using nn::Shape;

std::vector<int> level_sides(const Detector& model, int side) {
  const auto out = model.forward(Tensor::zeros(Shape{1, 3, side, side}));
  std::vector<int> sides;
  for (const auto& o : out) {
    EXPECT_EQ(o.raw.shape().h, o.raw.shape().w);
    EXPECT_EQ(o.raw.shape().c, 4 * model.config().reg_max + model.config().num_classes);
    sides.push_back(o.raw.shape().h);
  }
  return sides;
}

DetectorConfig tiny_full() {
  DetectorConfig cfg = DetectorConfig::tiny();
  cfg.four_heads = cfg.gsconv = cfg.eca = true;
  return cfg;
}

std::vector<LabeledImage> toy_set(int count, int side, std::uint64_t seed) {
  SceneSpec spec;
  spec.width = spec.height = side;
  spec.min_radius = 0.06;
  spec.max_radius = 0.12;
  spec.min_crabs = 2;
  spec.max_crabs = 4;
  return synthesize_dataset(spec, count, seed);
}

TEST(DetectorShape, BaselineLevelsAt640) {
  auto model = build_detector(DetectorConfig::tiny());
  EXPECT_EQ(level_sides(*model, 640), (std::vector<int>{80, 40, 20}));
}

TEST(DetectorShape, FourHeadsAddStride4Level) {
  DetectorConfig cfg = DetectorConfig::tiny();
  cfg.four_heads = true;
  auto model = build_detector(cfg);
  EXPECT_EQ(cfg.strides(), (std::vector<int>{4, 8, 16, 32}));
  EXPECT_EQ(level_sides(*model, 640), (std::vector<int>{160, 80, 40, 20}));
}

TEST(DetectorShape, ShapeLawAcrossVariantsAndSides) {
  for (int v = 0; v < 4; ++v) {
    DetectorConfig cfg = DetectorConfig::ablation_variant(v);
    cfg.width_multiplier = 0.125;
    auto model = build_detector(cfg);
    for (int side : {64, 96, 160}) {
      const auto sides = level_sides(*model, side);
      const auto strides = cfg.strides();
      ASSERT_EQ(sides.size(), strides.size());
      for (std::size_t i = 0; i < sides.size(); ++i) EXPECT_EQ(sides[i], side / strides[i]);
    }
  }
}

TEST(DetectorShape, RejectsBadInput) {
  auto model = build_detector(DetectorConfig::tiny());
  EXPECT_THROW(model->forward(Tensor::zeros(Shape{1, 3, 50, 64})), ShapeError);
  EXPECT_THROW(model->forward(Tensor::zeros(Shape{1, 1, 64, 64})), ShapeError);
}

TEST(DetectorConfigTest, AblationLattice) {
  const bool expected[4][3] = {{false, false, false}, {true, false, false}, {true, true, false},
                               {true, true, true}};
  for (int v = 0; v < 4; ++v) {
    const auto cfg = DetectorConfig::ablation_variant(v);
    EXPECT_EQ(cfg.four_heads, expected[v][0]);
    EXPECT_EQ(cfg.gsconv, expected[v][1]);
    EXPECT_EQ(cfg.eca, expected[v][2]);
  }
  EXPECT_THROW(DetectorConfig::ablation_variant(4), ConfigError);
}

TEST(DetectorConfigTest, RoundTripAndValidation) {
  DetectorConfig cfg = tiny_full();
  cfg.eca_spatial = true;
  cfg.seed = 99;
  const auto back = DetectorConfig::parse(cfg.to_line());
  EXPECT_EQ(back.to_line(), cfg.to_line());
  EXPECT_EQ(back.fingerprint(), cfg.fingerprint());

  DetectorConfig bad = cfg;
  bad.width_multiplier = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(build_detector(bad), ConfigError);
  bad = cfg;
  bad.depth_multiplier = -1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.input_side = 100;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(DetectorConfig::parse("four_heads=maybe"), ConfigError);
  EXPECT_THROW(DetectorConfig::parse("width=abc"), ConfigError);
}

TEST(DetectorParams, FourHeadsAddParameters) {
  const auto base = build_detector(DetectorConfig::ablation_variant(0));
  const auto four = build_detector(DetectorConfig::ablation_variant(1));
  EXPECT_GT(four->parameter_count(), base->parameter_count());
}

TEST(DetectorParams, GSConvNoLargerThanDenseTwin) {
  DetectorConfig gs = DetectorConfig::ablation_variant(2);
  DetectorConfig dense = DetectorConfig::ablation_variant(1);
  dense.dense_fusion = true;
  const auto a = build_detector(gs);
  const auto b = build_detector(dense);
  EXPECT_LE(a->parameter_count(), b->parameter_count());
}

TEST(DetectorParams, DesignatedFusionLayers) {
  auto model = build_detector(tiny_full());
  const auto names = model->fusion_layer_names();
  ASSERT_EQ(names.size(), 2u);
  auto count_kind = [](const Detector& m, const std::string& kind) {
    const auto kinds = m.layer_kinds();
    return std::count(kinds.begin(), kinds.end(), kind);
  };
  EXPECT_EQ(count_kind(*model, "gsconv"), 2);
  // One attention block after every neck stage: two top-down, four with the extra head.
  EXPECT_EQ(count_kind(*model, "eca"), 6);
  auto plain = build_detector(DetectorConfig::tiny());
  EXPECT_EQ(count_kind(*plain, "gsconv"), 0);
  EXPECT_EQ(count_kind(*plain, "eca"), 0);
}

TEST(GSConvTest, ShapeContract) {
  nn::Rng rng(1);
  GSConv block(32, 32, 3, 1, rng);
  EXPECT_EQ(block.forward(Tensor::zeros(Shape{1, 32, 8, 8})).shape(), (Shape{1, 32, 8, 8}));
  GSConv down(32, 64, 3, 2, rng);
  EXPECT_EQ(down.forward(Tensor::zeros(Shape{2, 32, 8, 8})).shape(), (Shape{2, 64, 4, 4}));
}

TEST(GSConvTest, FewerParametersThanDense) {
  nn::Rng rng(1);
  GSConv block(32, 32, 3, 1, rng);
  EXPECT_LT(block.parameter_count(), 9u * 32u * 32u);
}

TEST(GSConvTest, ZeroInZeroOutWithoutBias) {
  nn::Rng rng(2);
  GSConv block(16, 16, 3, 1, rng);
  for (auto& [name, p] : block.named_parameters()) {
    if (name.find("bias") != std::string::npos) std::fill(p.data().begin(), p.data().end(), 0.0f);
  }
  const Tensor y = block.forward_linear(Tensor::zeros(Shape{1, 16, 6, 6}));
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Reference channel attention: mean-pool, zero-padded 1-D correlation, sigmoid.
std::vector<double> eca_oracle(const std::vector<std::vector<double>>& planes,
                               const std::vector<double>& taps) {
  const int c = static_cast<int>(planes.size());
  const int k = static_cast<int>(taps.size());
  std::vector<double> pooled(c);
  for (int i = 0; i < c; ++i) {
    double s = 0.0;
    for (double v : planes[i]) s += v;
    pooled[i] = s / static_cast<double>(planes[i].size());
  }
  std::vector<double> w(c);
  for (int i = 0; i < c; ++i) {
    double acc = 0.0;
    for (int j = 0; j < k; ++j) {
      const int src = i + j - k / 2;
      if (src >= 0 && src < c) acc += taps[j] * pooled[src];
    }
    w[i] = sigmoid(acc);
  }
  return w;
}

Tensor planes_tensor(const std::vector<std::vector<double>>& planes, int h, int w) {
  std::vector<float> v;
  for (const auto& p : planes)
    for (double x : p) v.push_back(static_cast<float>(x));
  return Tensor::from(Shape{1, static_cast<int>(planes.size()), h, w}, v);
}

TEST(ECATest, AdaptiveKernel) {
  EXPECT_EQ(ECA::adaptive_kernel(4), 1);
  EXPECT_EQ(ECA::adaptive_kernel(16), 3);
  EXPECT_EQ(ECA::adaptive_kernel(64), 3);
  EXPECT_EQ(ECA::adaptive_kernel(256), 5);
  for (int c : {1, 2, 8, 32, 128, 512, 1024}) EXPECT_EQ(ECA::adaptive_kernel(c) % 2, 1);
}

TEST(ECATest, DominantChannelMatchesOracle) {
  nn::Rng rng(3);
  std::mt19937_64 g(4);
  std::uniform_real_distribution<double> u(0.0, 0.1);
  {
    ECA eca(4, rng);
    ASSERT_EQ(eca.kernel_size(), 1);
    eca.kernel().data()[0] = 0.5f;
    std::vector<std::vector<double>> planes(4, std::vector<double>(9));
    for (auto& p : planes)
      for (double& x : p) x = u(g);
    for (double& x : planes[2]) x += 3.0;
    const auto expect = eca_oracle(planes, {0.5});
    const Tensor w = eca.channel_weights(planes_tensor(planes, 3, 3));
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(w.data()[c], expect[c], 1e-6);
    EXPECT_EQ(std::max_element(w.data().begin(), w.data().end()) - w.data().begin(), 2);
  }
  {
    ECA eca(16, rng);
    ASSERT_EQ(eca.kernel_size(), 3);
    const std::vector<double> taps = {0.2, 0.6, 0.2};
    for (int j = 0; j < 3; ++j) eca.kernel().data()[j] = static_cast<float>(taps[j]);
    std::vector<std::vector<double>> planes(16, std::vector<double>(4));
    for (auto& p : planes)
      for (double& x : p) x = u(g);
    for (double& x : planes[9]) x += 2.0;
    const auto expect = eca_oracle(planes, taps);
    const Tensor w = eca.channel_weights(planes_tensor(planes, 2, 2));
    for (int c = 0; c < 16; ++c) EXPECT_NEAR(w.data()[c], expect[c], 1e-6);
    EXPECT_EQ(std::max_element(w.data().begin(), w.data().end()) - w.data().begin(), 9);
  }
}

TEST(ECATest, UniformInputGivesUniformInteriorWeights) {
  nn::Rng rng(5);
  ECA eca(16, rng);
  const Tensor w = eca.channel_weights(Tensor::full(Shape{1, 16, 4, 4}, 0.7f));
  // Zero padding only touches the k/2 border channels.
  const int r = eca.kernel_size() / 2;
  for (int c = r + 1; c < 16 - r; ++c) EXPECT_NEAR(w.data()[c], w.data()[r], 1e-7);
}

TEST(ECATest, ContractionAndShape) {
  nn::Rng rng(6);
  std::mt19937_64 g(7);
  std::normal_distribution<float> n(0.0f, 2.0f);
  for (bool spatial : {false, true}) {
    ECA eca(8, rng, spatial);
    std::vector<float> v(2 * 8 * 5 * 5);
    for (float& x : v) x = n(g);
    const Tensor x = Tensor::from(Shape{2, 8, 5, 5}, v);
    const Tensor y = eca.forward(x);
    ASSERT_EQ(y.shape(), x.shape());
    if (!spatial) {
      for (std::size_t i = 0; i < v.size(); ++i) EXPECT_LE(std::abs(y.data()[i]), std::abs(v[i]));
    } else {
      // Shuffled layout: the multiset of magnitudes per image still contracts in sum.
      double in = 0.0, out = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        in += std::abs(v[i]);
        out += std::abs(y.data()[i]);
      }
      EXPECT_LT(out, in);
    }
    const Tensor w = eca.channel_weights(spatial ? nn::slice_channels(x, 0, 4) : x);
    for (float a : w.data()) {
      EXPECT_GT(a, 0.0f);
      EXPECT_LT(a, 1.0f);
    }
  }
}

TEST(DetectorGrad, EveryParameterReceivesGradient) {
  DetectorConfig cfg = tiny_full();
  cfg.eca_spatial = true;
  cfg.input_side = 64;
  auto model = build_detector(cfg);
  const auto data = toy_set(2, 64, 11);
  std::vector<ImageBuffer> imgs;
  std::vector<std::vector<BoundingBox>> targets;
  for (const auto& d : data) {
    imgs.push_back(d.image);
    targets.push_back(d.boxes);
    // Fewer than top_k candidates, one of them the stride-32 anchor at (16, 16).
    targets.back().push_back(
        BoundingBox::from_corners(0, 12.5 / 64, 12.5 / 64, 19.5 / 64, 19.5 / 64));
  }
  const Tensor loss =
      detection_loss(model->forward(srr::images_to_tensor(imgs)), targets, 64, cfg.reg_max);
  ASSERT_TRUE(std::isfinite(loss.item()));
  loss.backward();
  for (const auto& [name, p] : model->named_parameters()) {
    ASSERT_TRUE(p.has_grad()) << name;
    double s = 0.0;
    for (float g : p.grad()) s += std::abs(g);
    EXPECT_GT(s, 0.0) << name;
  }
}

// Plain-double CIoU with an optional fixed aspect weight.
double ciou_oracle(const std::array<double, 4>& p, const std::array<double, 4>& g,
                   double* alpha_io, bool fixed) {
  const double eps = 1e-7;
  const double wp = p[2] - p[0], hp = p[3] - p[1] + eps;
  const double wg = g[2] - g[0], hg = g[3] - g[1] + eps;
  const double iw = std::max(0.0, std::min(p[2], g[2]) - std::max(p[0], g[0]));
  const double ih = std::max(0.0, std::min(p[3], g[3]) - std::max(p[1], g[1]));
  const double inter = iw * ih;
  const double iou = inter / (wp * hp + wg * hg - inter + eps);
  const double cw = std::max(p[2], g[2]) - std::min(p[0], g[0]);
  const double ch = std::max(p[3], g[3]) - std::min(p[1], g[1]);
  const double c2 = cw * cw + ch * ch + eps;
  const double rho2 =
      (std::pow(g[0] + g[2] - p[0] - p[2], 2) + std::pow(g[1] + g[3] - p[1] - p[3], 2)) / 4;
  const double v = 4 / (std::numbers::pi * std::numbers::pi) *
                   std::pow(std::atan(wg / hg) - std::atan(wp / hp), 2);
  if (!fixed) *alpha_io = v / (v - iou + (1 + eps));
  return iou - (rho2 / c2 + *alpha_io * v);
}

TEST(CIoUTest, ValueAndGradientMatchOracle) {
  std::mt19937_64 g(12);
  std::uniform_real_distribution<double> u(0.0, 50.0), s(5.0, 40.0);
  for (int t = 0; t < 200; ++t) {
    const double px = u(g), py = u(g), gx = u(g), gy = u(g);
    const std::array<double, 4> p = {px, py, px + s(g), py + s(g)};
    const std::array<double, 4> q = {gx, gy, gx + s(g), gy + s(g)};
    double alpha = 0.0;
    const double ref = ciou_oracle(p, q, &alpha, false);
    const CIoUResult r = complete_iou(p, q);
    EXPECT_NEAR(r.value, ref, 1e-12);
    for (int i = 0; i < 4; ++i) {
      const double h = 1e-5;
      auto hi = p, lo = p;
      hi[i] += h;
      lo[i] -= h;
      const double fd =
          (ciou_oracle(hi, q, &alpha, true) - ciou_oracle(lo, q, &alpha, true)) / (2 * h);
      EXPECT_NEAR(r.grad[i], fd, 1e-6 + 1e-4 * std::abs(fd));
    }
  }
}

TEST(CIoUTest, IdenticalBoxesGiveOne) {
  const CIoUResult r = complete_iou({1, 2, 11, 7}, {1, 2, 11, 7});
  EXPECT_NEAR(r.value, 1.0, 1e-7);
}

BoundingBox box(int cls, double x1, double y1, double x2, double y2, double conf) {
  return BoundingBox::from_corners(cls, x1, y1, x2, y2, conf);
}

// Reference suppression: repeatedly take the most confident survivor and discard every
// remaining same-class box overlapping it above the threshold.
std::vector<BoundingBox> nms_oracle(std::vector<BoundingBox> boxes, double thr) {
  std::vector<BoundingBox> out;
  while (!boxes.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < boxes.size(); ++i) {
      if (boxes[i].confidence > boxes[best].confidence) best = i;
    }
    const BoundingBox top = boxes[best];
    out.push_back(top);
    std::vector<BoundingBox> rest;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (i == best) continue;
      if (boxes[i].class_id == top.class_id && eval::iou(boxes[i], top) > thr) continue;
      rest.push_back(boxes[i]);
    }
    boxes = std::move(rest);
  }
  return out;
}

TEST(NMSTest, ExactDuplicateSuppressed) {
  const auto kept = nms({box(0, 0.1, 0.1, 0.3, 0.3, 0.8), box(0, 0.1, 0.1, 0.3, 0.3, 0.9)}, 0.5);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_DOUBLE_EQ(kept[0].confidence, 0.9);
}

TEST(NMSTest, ClassWise) {
  const auto kept = nms({box(0, 0.1, 0.1, 0.3, 0.3, 0.8), box(1, 0.1, 0.1, 0.3, 0.3, 0.9)}, 0.5);
  EXPECT_EQ(kept.size(), 2u);
  EXPECT_EQ(
      nms({box(0, 0.1, 0.1, 0.3, 0.3, 0.8), box(1, 0.1, 0.1, 0.3, 0.3, 0.9)}, 0.5, true).size(),
      1u);
}

TEST(NMSTest, MatchesOracleAndIsIdempotent) {
  std::mt19937_64 g(13);
  std::uniform_real_distribution<double> u(0.0, 0.8), s(0.05, 0.2), c(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<BoundingBox> boxes;
    const int n = 1 + static_cast<int>(g() % 25);
    for (int i = 0; i < n; ++i) {
      const double x = u(g), y = u(g);
      boxes.push_back(box(static_cast<int>(g() % 2), x, y, x + s(g), y + s(g), c(g)));
    }
    const auto kept = nms(boxes, 0.45);
    EXPECT_EQ(kept, nms_oracle(boxes, 0.45));
    EXPECT_EQ(nms(kept, 0.45), kept);
    for (std::size_t i = 1; i < kept.size(); ++i) {
      EXPECT_GE(kept[i - 1].confidence, kept[i].confidence);
    }
  }
}

// Single-level raw map with hand-set logits. Distances are peaked at integer bins.
LevelOutput raw_map(
    int side, int stride, int reg_max,
    const std::vector<std::tuple<int, int, int, float, std::array<int, 4>>>& cells) {
  const int c = 4 * reg_max + 2;
  Tensor raw = Tensor::full(Shape{1, c, side, side}, -20.0f);
  auto d = raw.data();
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  for (const auto& [x, y, cls, logit, dist] : cells) {
    const std::size_t cell = static_cast<std::size_t>(y) * side + x;
    d[(4 * reg_max + cls) * plane + cell] = logit;
    for (int s = 0; s < 4; ++s) d[(s * reg_max + dist[s]) * plane + cell] = 40.0f;
  }
  return {stride, raw};
}

TEST(DecodeTest, AllNegativeLogitsGiveNothing) {
  const auto out = decode({raw_map(4, 16, 8, {})}, 64, 8, 0.25, 0.45);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_TRUE(out[0].empty());
}

TEST(DecodeTest, HandcraftedMapMatchesOracle) {
  // Cells (1,1) and (2,1) describe nearly the same box; (3,3) is separate.
  const auto level = raw_map(4, 16, 8,
                             {{1, 1, 0, 3.0f, {1, 1, 2, 1}},
                              {2, 1, 0, 1.0f, {2, 1, 1, 1}},
                              {3, 3, 1, 2.0f, {1, 1, 1, 1}}});
  const auto all = decode({level}, 64, 8, 0.25, 1.0)[0];
  ASSERT_EQ(all.size(), 3u);
  // (1,1): center 24, left 16 right 32 -> x 8..56; top 16 bottom 16 -> y 8..40.
  EXPECT_NEAR(all[0].x1(), 8.0 / 64, 1e-6);
  EXPECT_NEAR(all[0].x2(), 56.0 / 64, 1e-6);
  EXPECT_NEAR(all[0].y1(), 8.0 / 64, 1e-6);
  EXPECT_NEAR(all[0].y2(), 40.0 / 64, 1e-6);
  EXPECT_NEAR(all[0].confidence, sigmoid(3.0), 1e-9);
  const auto kept = decode({level}, 64, 8, 0.25, 0.45)[0];
  EXPECT_EQ(kept, nms_oracle(all, 0.45));
  EXPECT_EQ(kept.size(), 2u);
}

TEST(DecodeTest, ConfidencesAndBoxesBounded) {
  auto model = build_detector(DetectorConfig::tiny());
  DetectorConfig cfg = model->config();
  const auto out = model->forward(Tensor::full(Shape{1, 3, 64, 64}, 0.5f));
  const auto boxes = decode(out, 64, cfg.reg_max, 0.0, 0.45);
  ASSERT_FALSE(boxes[0].empty());
  for (const auto& b : boxes[0]) {
    EXPECT_GE(b.confidence, 0.0);
    EXPECT_LE(b.confidence, 1.0);
    EXPECT_GE(b.x1(), -1e-12);
    EXPECT_LE(b.x2(), 1.0 + 1e-12);
    EXPECT_GE(b.y1(), -1e-12);
    EXPECT_LE(b.y2(), 1.0 + 1e-12);
  }
}

TEST(DetectorTrain, ZeroLearningRateKeepsLossConstant) {
  DetectorConfig cfg = DetectorConfig::tiny();
  cfg.input_side = 64;
  auto model = build_detector(cfg);
  const auto data = toy_set(4, 64, 21);
  DetTrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 2;
  tc.learning_rate = 0.0;
  const auto ck = train_detector(*model, data, tc);
  ASSERT_EQ(ck.loss_history.size(), 3u);
  for (double l : ck.loss_history) EXPECT_NEAR(l, ck.loss_history[0], 1e-7);
}

TEST(DetectorTrain, SeededRunsAgree) {
  DetectorConfig cfg = DetectorConfig::tiny();
  cfg.input_side = 64;
  cfg.seed = 8;
  const auto data = toy_set(4, 64, 22);
  DetTrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  auto a = build_detector(cfg);
  auto b = build_detector(cfg);
  const auto ha = train_detector(*a, data, tc).loss_history;
  const auto hb = train_detector(*b, data, tc).loss_history;
  EXPECT_NEAR(ha[0], hb[0], 1e-6);
  EXPECT_NEAR(ha[1], hb[1], 1e-6);
}

TEST(DetectorTrain, LossDecreases) {
  DetectorConfig cfg = DetectorConfig::tiny();
  cfg.input_side = 64;
  auto model = build_detector(cfg);
  const auto data = toy_set(4, 64, 23);
  DetTrainConfig tc;
  tc.epochs = 40;
  tc.batch_size = 4;
  tc.learning_rate = 2e-3;
  const auto h = train_detector(*model, data, tc).loss_history;
  EXPECT_LT(h.back(), 0.7 * h.front());
}

TEST(DetectorTrain, RejectsBadData) {
  DetectorConfig cfg = DetectorConfig::tiny();
  cfg.input_side = 64;
  auto model = build_detector(cfg);
  DetTrainConfig tc;
  tc.epochs = 1;
  EXPECT_THROW(train_detector(*model, std::span<const LabeledImage>{}, tc), std::invalid_argument);
  auto data = toy_set(1, 64, 24);
  auto wrong = toy_set(1, 96, 24);
  EXPECT_THROW(train_detector(*model, wrong, tc), ShapeError);
  data[0].boxes.push_back(BoundingBox{0, 0.5, 0.5, 0.0, 0.1});
  EXPECT_THROW(train_detector(*model, data, tc), std::invalid_argument);
}

TEST(DetectorCheckpoint, ReloadReproducesOutputs) {
  DetectorConfig cfg = tiny_full();
  cfg.seed = 31;
  auto model = build_detector(cfg);
  const auto ck = detector_checkpoint(*model);
  auto back = load_detector(ck);
  const Tensor x = Tensor::full(Shape{1, 3, 64, 64}, 0.25f);
  const auto a = model->forward(x);
  const auto b = back->forward(x);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t l = 0; l < a.size(); ++l) {
    for (std::size_t i = 0; i < a[l].raw.numel(); ++i)
      ASSERT_EQ(a[l].raw.data()[i], b[l].raw.data()[i]);
  }
  auto tampered = ck;
  tampered.fingerprint = "0";
  EXPECT_THROW(load_detector(tampered), ConfigError);
  tampered = ck;
  tampered.kind = "sr:RDN";
  EXPECT_THROW(load_detector(tampered), ConfigError);
}

}  // namespace
}  // namespace crabsurvey::det
