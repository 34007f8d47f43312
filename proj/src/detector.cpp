// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include "crabsurvey/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "crabsurvey/det_eval.hpp"
#include "crabsurvey/errors.hpp"
#include "crabsurvey/nn/optim.hpp"
#include "crabsurvey/srr.hpp"

namespace crabsurvey::det {

using nn::Conv2d;
using nn::ConvOptions;
using nn::ConvTranspose2d;
using nn::Module;
using nn::Rng;
using nn::Shape;

namespace {

class Bottleneck : public Module {
 public:
  Bottleneck(int channels, bool shortcut, Rng& rng)
      : Module("bottleneck"),
        shortcut_(shortcut),
        a_(add_module<ConvBlock>("cv1", channels, channels, 3, 1, rng)),
        b_(add_module<ConvBlock>("cv2", channels, channels, 3, 1, rng)) {}
  Tensor forward(const Tensor& x) const {
    const Tensor y = b_.forward(a_.forward(x));
    return shortcut_ ? nn::add(x, y) : y;
  }

 private:
  bool shortcut_;
  const ConvBlock& a_;
  const ConvBlock& b_;
};

// Split-transform-merge stage: 1x1 to two halves, n bottlenecks on the second half, every
// intermediate concatenated and fused by a 1x1.
class C2f : public Module {
 public:
  C2f(int in, int out, int n, bool shortcut, Rng& rng)
      : Module("c2f"),
        hidden_(std::max(1, out / 2)),
        cv1_(add_module<ConvBlock>("cv1", in, 2 * hidden_, 1, 1, rng)),
        cv2_(add_module<ConvBlock>("cv2", (2 + n) * hidden_, out, 1, 1, rng)) {
    for (int i = 0; i < n; ++i) {
      blocks_.push_back(&add_module<Bottleneck>("m" + std::to_string(i), hidden_, shortcut, rng));
    }
  }
  Tensor forward(const Tensor& x) const {
    const Tensor y = cv1_.forward(x);
    std::vector<Tensor> parts{nn::slice_channels(y, 0, hidden_),
                              nn::slice_channels(y, hidden_, hidden_)};
    for (const auto* b : blocks_) parts.push_back(b->forward(parts.back()));
    return cv2_.forward(nn::concat_channels(parts));
  }

 private:
  int hidden_;
  const ConvBlock& cv1_;
  const ConvBlock& cv2_;
  std::vector<const Bottleneck*> blocks_;
};

class SPPF : public Module {
 public:
  SPPF(int in, int out, Rng& rng)
      : Module("sppf"),
        cv1_(add_module<ConvBlock>("cv1", in, std::max(1, in / 2), 1, 1, rng)),
        cv2_(add_module<ConvBlock>("cv2", 4 * std::max(1, in / 2), out, 1, 1, rng)) {}
  Tensor forward(const Tensor& x) const {
    const Tensor a = cv1_.forward(x);
    const Tensor b = nn::max_pool2d(a, 5, 1, 2);
    const Tensor c = nn::max_pool2d(b, 5, 1, 2);
    const Tensor d = nn::max_pool2d(c, 5, 1, 2);
    return cv2_.forward(nn::concat_channels({a, b, c, d}));
  }

 private:
  const ConvBlock& cv1_;
  const ConvBlock& cv2_;
};

// Decoupled head of one pyramid level.
class HeadLevel : public Module {
 public:
  HeadLevel(int in, int box_width, int cls_width, int reg_max, int num_classes, int stride,
            int input_side, Rng& rng)
      : Module("head_level"),
        box1_(add_module<ConvBlock>("box1", in, box_width, 3, 1, rng)),
        box2_(add_module<ConvBlock>("box2", box_width, box_width, 3, 1, rng)),
        box_out_(add_module<Conv2d>("box_out", box_width, 4 * reg_max, 1, rng)),
        cls1_(add_module<ConvBlock>("cls1", in, cls_width, 3, 1, rng)),
        cls2_(add_module<ConvBlock>("cls2", cls_width, cls_width, 3, 1, rng)),
        cls_out_(add_module<Conv2d>("cls_out", cls_width, num_classes, 1, rng)) {
    Tensor box_bias = box_out_.bias();
    for (float& v : box_bias.data()) v = 1.0f;
    // Prior of roughly five objects per image spread over this level's cells.
    const double cells = std::pow(static_cast<double>(input_side) / stride, 2);
    Tensor cls_bias = cls_out_.bias();
    for (float& v : cls_bias.data()) v = static_cast<float>(std::log(5.0 / num_classes / cells));
  }
  Tensor forward(const Tensor& x) const {
    return nn::concat_channels({box_out_.forward(box2_.forward(box1_.forward(x))),
                                cls_out_.forward(cls2_.forward(cls1_.forward(x)))});
  }

 private:
  const ConvBlock& box1_;
  const ConvBlock& box2_;
  const Conv2d& box_out_;
  const ConvBlock& cls1_;
  const ConvBlock& cls2_;
  const Conv2d& cls_out_;
};

// Fusion block at a designated neck position; identity when absent.
class Fusion : public Module {
 public:
  Fusion(NeckFusion kind, int in, int out, bool shuffle, Rng& rng) : Module("fusion") {
    if (kind == NeckFusion::kDense) dense_ = &add_module<ConvBlock>("dense", in, out, 3, 1, rng);
    if (kind == NeckFusion::kGSConv)
      gs_ = &add_module<GSConv>("gsconv", in, out, 3, 1, rng, shuffle);
  }
  Tensor forward(const Tensor& x) const {
    if (dense_) return dense_->forward(x);
    if (gs_) return gs_->forward(x);
    return x;
  }

 private:
  const ConvBlock* dense_ = nullptr;
  const GSConv* gs_ = nullptr;
};

std::string lower_bool(bool b) { return b ? "1" : "0"; }

double softmax_expectation(const float* logits, std::size_t stride, int bins) {
  float mx = logits[0];
  for (int i = 1; i < bins; ++i) mx = std::max(mx, logits[i * stride]);
  double z = 0, e = 0;
  for (int i = 0; i < bins; ++i) {
    const double p = std::exp(static_cast<double>(logits[i * stride] - mx));
    z += p;
    e += p * i;
  }
  return e / z;
}

}  // namespace

std::vector<int> DetectorConfig::strides() const {
  if (four_heads) return {4, 8, 16, 32};
  return {8, 16, 32};
}

void DetectorConfig::validate() const {
  if (!(width_multiplier > 0 && width_multiplier <= 4) ||
      !(depth_multiplier > 0 && depth_multiplier <= 4)) {
    throw ConfigError("width/depth multipliers must be in (0, 4]");
  }
  if (max_channels < 8) throw ConfigError("max_channels must be >= 8");
  if (num_classes != kNumClasses) throw ConfigError("num_classes must be 2");
  if (reg_max < 2 || reg_max > 64) throw ConfigError("reg_max must be in 2..64");
  if (input_side < 32 || input_side % 32 != 0) {
    throw ConfigError("input_side must be a positive multiple of 32");
  }
  if (!(conf_threshold > 0 && conf_threshold < 1) || !(nms_iou > 0 && nms_iou < 1)) {
    throw ConfigError("conf_threshold and nms_iou must be in (0, 1)");
  }
}

std::string DetectorConfig::to_line() const {
  std::ostringstream os;
  os.precision(17);
  os << "four_heads=" << lower_bool(four_heads) << " gsconv=" << lower_bool(gsconv)
     << " eca=" << lower_bool(eca) << " eca_spatial=" << lower_bool(eca_spatial)
     << " dense_fusion=" << lower_bool(dense_fusion)
     << " gsconv_shuffle=" << lower_bool(gsconv_shuffle) << " width=" << width_multiplier
     << " depth=" << depth_multiplier << " max_channels=" << max_channels
     << " classes=" << num_classes << " reg_max=" << reg_max << " input_side=" << input_side
     << " conf=" << conf_threshold << " nms_iou=" << nms_iou << " seed=" << seed;
  return os.str();
}

DetectorConfig DetectorConfig::parse(const std::string& line) {
  DetectorConfig cfg;
  std::istringstream is(line);
  std::string token;
  auto flag = [](const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ConfigError("bad flag value: " + v);
  };
  try {
    while (is >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos) throw ConfigError("expected key=value, got " + token);
      const std::string key = token.substr(0, eq), v = token.substr(eq + 1);
      if (key == "four_heads") cfg.four_heads = flag(v);
      else if (key == "gsconv") cfg.gsconv = flag(v);
      else if (key == "eca") cfg.eca = flag(v);
      else if (key == "eca_spatial") cfg.eca_spatial = flag(v);
      else if (key == "dense_fusion") cfg.dense_fusion = flag(v);
      else if (key == "gsconv_shuffle") cfg.gsconv_shuffle = flag(v);
      else if (key == "width") cfg.width_multiplier = std::stod(v);
      else if (key == "depth") cfg.depth_multiplier = std::stod(v);
      else if (key == "max_channels") cfg.max_channels = std::stoi(v);
      else if (key == "classes") cfg.num_classes = std::stoi(v);
      else if (key == "reg_max") cfg.reg_max = std::stoi(v);
      else if (key == "input_side") cfg.input_side = std::stoi(v);
      else if (key == "conf") cfg.conf_threshold = std::stof(v);
      else if (key == "nms_iou") cfg.nms_iou = std::stof(v);
      else if (key == "seed") cfg.seed = std::stoull(v);
      else throw ConfigError("unknown detector key: " + key);
    }
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const ConfigError*>(&e) == nullptr) {
      throw ConfigError(std::string("bad detector config value: ") + e.what());
    }
    throw;
  }
  cfg.validate();
  return cfg;
}

std::string DetectorConfig::fingerprint() const { return nn::fnv1a_hex(to_line()); }

DetectorConfig DetectorConfig::ablation_variant(int index) {
  DetectorConfig cfg;
  switch (index) {
    case 0: break;
    case 1: cfg.four_heads = true; break;
    case 2: cfg.four_heads = cfg.gsconv = true; break;
    case 3: cfg.four_heads = cfg.gsconv = cfg.eca = true; break;
    default: throw ConfigError("ablation variant index must be 0..3");
  }
  return cfg;
}

DetectorConfig DetectorConfig::tiny() {
  DetectorConfig cfg;
  cfg.width_multiplier = 0.125;
  cfg.depth_multiplier = 0.33;
  cfg.reg_max = 8;
  return cfg;
}

int scaled_channels(int base, const DetectorConfig& cfg) {
  const double c = std::min(base, cfg.max_channels) * cfg.width_multiplier;
  return std::max(8, static_cast<int>(std::ceil(c / 8.0)) * 8);
}

int scaled_depth(int base, const DetectorConfig& cfg) {
  return std::max(1, static_cast<int>(std::lround(base * cfg.depth_multiplier)));
}

ConvBlock::ConvBlock(int in, int out, int kernel, int stride, Rng& rng, int groups)
    : Module("conv_block"),
      conv_(add_module<Conv2d>("conv", in, out, kernel, rng,
                               ConvOptions{.stride = stride, .groups = groups})) {}

Tensor ConvBlock::forward(const Tensor& x) const { return nn::silu(conv_.forward(x)); }

GSConv::GSConv(int in, int out, int kernel, int stride, Rng& rng, bool shuffle)
    : Module("gsconv"),
      shuffle_(shuffle),
      depthwise_(add_module<Conv2d>("depthwise", in, in, kernel, rng,
                                    ConvOptions{.stride = stride, .groups = in})),
      pointwise_(add_module<Conv2d>("pointwise", in, out / 2, 1, rng)),
      transposed_(add_module<ConvTranspose2d>("transposed", out / 2, out / 2, 3, rng,
                                              ConvOptions{.pad = 1, .groups = out / 2})) {
  if (out % 2 != 0) throw ShapeError("GSConv output channels must be even");
}

Tensor GSConv::run(const Tensor& x, bool activate) const {
  auto act = [&](const Tensor& t) { return activate ? nn::silu(t) : t; };
  const Tensor a = act(pointwise_.forward(depthwise_.forward(x)));
  const Tensor b = act(transposed_.forward(a));
  const Tensor y = nn::concat_channels({a, b});
  return shuffle_ ? nn::channel_shuffle(y, 2) : y;
}

Tensor GSConv::forward(const Tensor& x) const { return run(x, true); }
Tensor GSConv::forward_linear(const Tensor& x) const { return run(x, false); }

int ECA::adaptive_kernel(int channels) {
  const int t = static_cast<int>(std::abs((std::log2(static_cast<double>(channels)) + 1.0) / 2.0));
  return std::max(1, t % 2 == 1 ? t : t + 1);
}

ECA::ECA(int channels, Rng& rng, bool spatial)
    : Module(spatial ? "eca_spatial" : "eca"), spatial_(spatial), channels_(channels) {
  if (channels <= 0 || (spatial && channels % 2 != 0)) {
    throw ShapeError("ECA channel count must be positive (and even with the spatial branch)");
  }
  const int gated = spatial ? channels / 2 : channels;
  k_ = adaptive_kernel(gated);
  std::uniform_real_distribution<double> u(-1.0 / std::sqrt(k_), 1.0 / std::sqrt(k_));
  std::vector<float> taps(k_);
  for (float& t : taps) t = static_cast<float>(u(rng));
  kernel_ = add_parameter("kernel", Tensor::from(Shape{1, 1, k_, 1}, std::move(taps), true));
  if (spatial) {
    gamma_ = &add_module<nn::ChannelParameter>("spatial_weight", gated, 0.0f);
    beta_ = &add_module<nn::ChannelParameter>("spatial_bias", gated, 1.0f);
  }
}

Tensor ECA::channel_weights(const Tensor& x) const {
  const Shape s = x.shape();
  const Tensor pooled = nn::global_avg_pool(x);
  const Tensor column = nn::reshape(pooled, Shape{s.n, 1, s.c, 1});
  const Tensor mixed = nn::conv2d(column, kernel_, Tensor(), nn::ConvGeometry{1, k_ / 2, 0, 1});
  return nn::sigmoid(nn::reshape(mixed, Shape{s.n, s.c, 1, 1}));
}

Tensor ECA::forward(const Tensor& x) const {
  if (x.shape().c != channels_) throw ShapeError("ECA channel mismatch");
  if (!spatial_) return nn::mul(x, channel_weights(x));
  const int half = channels_ / 2;
  const Tensor xc = nn::slice_channels(x, 0, half);
  const Tensor xs = nn::slice_channels(x, half, half);
  const Tensor yc = nn::mul(xc, channel_weights(xc));
  const Tensor norm = nn::group_norm(xs, half);
  const Tensor gate = nn::sigmoid(nn::add(nn::mul(norm, gamma_->value()), beta_->value()));
  return nn::channel_shuffle(nn::concat_channels({yc, nn::mul(xs, gate)}), 2);
}

struct Detector::Impl {
  // Backbone.
  const ConvBlock* stem = nullptr;
  const ConvBlock* down1 = nullptr;
  const C2f* stage1 = nullptr;
  const ConvBlock* down2 = nullptr;
  const C2f* stage2 = nullptr;
  const ConvBlock* down3 = nullptr;
  const C2f* stage3 = nullptr;
  const ConvBlock* down4 = nullptr;
  const C2f* stage4 = nullptr;
  const SPPF* sppf = nullptr;
  // Top-down path.
  const Fusion* layer11 = nullptr;
  const C2f* td4 = nullptr;
  const Fusion* layer12 = nullptr;
  const C2f* td3 = nullptr;
  const C2f* td2 = nullptr;
  // Bottom-up path.
  const ConvBlock* bu_down2 = nullptr;
  const C2f* bu3 = nullptr;
  const ConvBlock* bu_down3 = nullptr;
  const C2f* bu4 = nullptr;
  const ConvBlock* bu_down4 = nullptr;
  const C2f* bu5 = nullptr;
  std::vector<const ECA*> eca;  // one per neck C2f, in forward order
  std::vector<const HeadLevel*> heads;
};

Detector::~Detector() = default;

Detector::Detector(DetectorConfig config)
    : Module("detector"), config_(std::move(config)), impl_(std::make_unique<Impl>()) {
  config_.validate();
  Rng rng(config_.seed);
  auto& I = *impl_;
  const int c0 = scaled_channels(64, config_), c1 = scaled_channels(128, config_),
            c2 = scaled_channels(256, config_), c3 = scaled_channels(512, config_),
            c4 = scaled_channels(1024, config_);
  const int n3 = scaled_depth(3, config_), n6 = scaled_depth(6, config_);

  I.stem = &add_module<ConvBlock>("backbone.stem", 3, c0, 3, 2, rng);
  I.down1 = &add_module<ConvBlock>("backbone.down1", c0, c1, 3, 2, rng);
  I.stage1 = &add_module<C2f>("backbone.stage1", c1, c1, n3, true, rng);
  I.down2 = &add_module<ConvBlock>("backbone.down2", c1, c2, 3, 2, rng);
  I.stage2 = &add_module<C2f>("backbone.stage2", c2, c2, n6, true, rng);
  I.down3 = &add_module<ConvBlock>("backbone.down3", c2, c3, 3, 2, rng);
  I.stage3 = &add_module<C2f>("backbone.stage3", c3, c3, n6, true, rng);
  I.down4 = &add_module<ConvBlock>("backbone.down4", c3, c4, 3, 2, rng);
  I.stage4 = &add_module<C2f>("backbone.stage4", c4, c4, n3, true, rng);
  I.sppf = &add_module<SPPF>("backbone.sppf", c4, c4, rng);

  const NeckFusion fusion = config_.neck_fusion();
  const bool fused = fusion != NeckFusion::kNone;
  auto eca = [&](const std::string& name, int channels) {
    if (config_.eca) I.eca.push_back(&add_module<ECA>(name, channels, rng, config_.eca_spatial));
  };
  I.layer11 = &add_module<Fusion>("neck.layer11", fusion, c4 + c3, c3, config_.gsconv_shuffle, rng);
  I.td4 = &add_module<C2f>("neck.td4", fused ? c3 : c4 + c3, c3, n3, false, rng);
  eca("neck.td4_eca", c3);
  I.layer12 = &add_module<Fusion>("neck.layer12", fusion, c3 + c2, c2, config_.gsconv_shuffle, rng);
  I.td3 = &add_module<C2f>("neck.td3", fused ? c2 : c3 + c2, c2, n3, false, rng);
  eca("neck.td3_eca", c2);
  if (config_.four_heads) {
    I.td2 = &add_module<C2f>("neck.td2", c2 + c1, c1, n3, false, rng);
    eca("neck.td2_eca", c1);
    I.bu_down2 = &add_module<ConvBlock>("neck.bu_down2", c1, c1, 3, 2, rng);
    I.bu3 = &add_module<C2f>("neck.bu3", c1 + c2, c2, n3, false, rng);
    eca("neck.bu3_eca", c2);
  }
  I.bu_down3 = &add_module<ConvBlock>("neck.bu_down3", c2, c2, 3, 2, rng);
  I.bu4 = &add_module<C2f>("neck.bu4", c2 + c3, c3, n3, false, rng);
  eca("neck.bu4_eca", c3);
  I.bu_down4 = &add_module<ConvBlock>("neck.bu_down4", c3, c3, 3, 2, rng);
  I.bu5 = &add_module<C2f>("neck.bu5", c3 + c4, c4, n3, false, rng);
  eca("neck.bu5_eca", c4);

  std::vector<int> level_channels = {c2, c3, c4};
  if (config_.four_heads) level_channels.insert(level_channels.begin(), c1);
  // Branch widths follow the stride-8 level so the extra head adds a branch to an
  // otherwise unchanged head plan.
  const int box_width = std::max({16, c2 / 4, 4 * config_.reg_max});
  const int cls_width = std::max(c2, std::min(config_.num_classes, 100));
  const auto strides = config_.strides();
  for (std::size_t i = 0; i < strides.size(); ++i) {
    I.heads.push_back(&add_module<HeadLevel>(
        "head.p" + std::to_string(strides[i]), level_channels[i], box_width, cls_width,
        config_.reg_max, config_.num_classes, strides[i], config_.input_side, rng));
  }
}

std::vector<std::string> Detector::fusion_layer_names() const {
  return {"neck.layer11", "neck.layer12"};
}

std::vector<LevelOutput> Detector::forward(const Tensor& images) const {
  const Shape s = images.shape();
  if (s.c != 3 || s.h % 32 != 0 || s.w % 32 != 0) {
    throw ShapeError("detector input must be 3-channel with sides divisible by 32, got " + s.str());
  }
  const auto& I = *impl_;
  std::size_t e = 0;
  auto attend = [&](const Tensor& x) { return config_.eca ? I.eca[e++]->forward(x) : x; };

  const Tensor p2 = I.stage1->forward(I.down1->forward(I.stem->forward(images)));
  const Tensor p3 = I.stage2->forward(I.down2->forward(p2));
  const Tensor p4 = I.stage3->forward(I.down3->forward(p3));
  const Tensor p5 = I.sppf->forward(I.stage4->forward(I.down4->forward(p4)));

  const Tensor t4 = attend(I.td4->forward(
      I.layer11->forward(nn::concat_channels({nn::upsample_nearest(p5, 2), p4}))));
  const Tensor t3 = attend(I.td3->forward(
      I.layer12->forward(nn::concat_channels({nn::upsample_nearest(t4, 2), p3}))));

  std::vector<Tensor> levels;
  Tensor o3 = t3;
  if (config_.four_heads) {
    const Tensor o2 =
        attend(I.td2->forward(nn::concat_channels({nn::upsample_nearest(t3, 2), p2})));
    levels.push_back(o2);
    o3 = attend(I.bu3->forward(nn::concat_channels({I.bu_down2->forward(o2), t3})));
  }
  levels.push_back(o3);
  const Tensor o4 = attend(I.bu4->forward(nn::concat_channels({I.bu_down3->forward(o3), t4})));
  levels.push_back(o4);
  levels.push_back(attend(I.bu5->forward(nn::concat_channels({I.bu_down4->forward(o4), p5}))));

  const auto strides = config_.strides();
  std::vector<LevelOutput> out;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    out.push_back({strides[i], I.heads[i]->forward(levels[i])});
  }
  return out;
}

std::unique_ptr<Detector> build_detector(const DetectorConfig& config) {
  return std::make_unique<Detector>(config);
}

std::vector<BoundingBox> nms(std::vector<BoundingBox> boxes, double iou_threshold,
                             bool class_agnostic) {
  std::stable_sort(boxes.begin(), boxes.end(), [](const BoundingBox& a, const BoundingBox& b) {
    return a.confidence > b.confidence;
  });
  std::vector<BoundingBox> kept;
  for (const auto& b : boxes) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const BoundingBox& k) {
      return (class_agnostic || k.class_id == b.class_id) && eval::iou(k, b) > iou_threshold;
    });
    if (!suppressed) kept.push_back(b);
  }
  return kept;
}

std::vector<std::vector<BoundingBox>> decode(const std::vector<LevelOutput>& outputs,
                                             int input_side, int reg_max, double conf_threshold,
                                             double nms_iou) {
  if (outputs.empty()) return {};
  const int batch = outputs.front().raw.shape().n;
  std::vector<std::vector<BoundingBox>> result(batch);
  for (const auto& level : outputs) {
    const Shape s = level.raw.shape();
    const int nc = s.c - 4 * reg_max;
    if (nc <= 0 || s.n != batch) throw ShapeError("decode: unexpected head shape " + s.str());
    const auto d = level.raw.data();
    const std::size_t plane = s.plane();
    for (int n = 0; n < batch; ++n) {
      const float* base = d.data() + static_cast<std::size_t>(n) * s.c * plane;
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const std::size_t cell = static_cast<std::size_t>(y) * s.w + x;
          int best = 0;
          float best_logit = base[(4 * reg_max) * plane + cell];
          for (int c = 1; c < nc; ++c) {
            const float v = base[(4 * reg_max + c) * plane + cell];
            if (v > best_logit) {
              best_logit = v;
              best = c;
            }
          }
          const double conf = 1.0 / (1.0 + std::exp(-static_cast<double>(best_logit)));
          if (conf <= conf_threshold) continue;
          double dist[4];
          for (int side = 0; side < 4; ++side) {
            dist[side] = softmax_expectation(base + side * reg_max * plane + cell, plane, reg_max);
          }
          const double ax = x + 0.5, ay = y + 0.5, st = level.stride;
          BoundingBox box = BoundingBox::from_corners(
              best, (ax - dist[0]) * st / input_side, (ay - dist[1]) * st / input_side,
              (ax + dist[2]) * st / input_side, (ay + dist[3]) * st / input_side, conf);
          if (clip_box(box)) result[n].push_back(box);
        }
    }
  }
  for (auto& r : result) r = nms(std::move(r), nms_iou);
  return result;
}

std::vector<std::vector<BoundingBox>> detect_batch(const Detector& model,
                                                   std::span<const ImageBuffer> images) {
  const auto& cfg = model.config();
  std::vector<ImageBuffer> prepared;
  for (const auto& img : images) {
    if (img.channels() != 3) throw ShapeError("detector expects RGB images");
    prepared.push_back(img.width() == cfg.input_side && img.height() == cfg.input_side
                           ? img
                           : resize(img, cfg.input_side, cfg.input_side));
  }
  if (prepared.empty()) return {};
  nn::NoGradGuard guard;
  return decode(model.forward(srr::images_to_tensor(prepared)), cfg.input_side, cfg.reg_max,
                cfg.conf_threshold, cfg.nms_iou);
}

std::vector<BoundingBox> detect(const Detector& model, const ImageBuffer& image) {
  const ImageBuffer one[] = {image};
  return detect_batch(model, one).front();
}

nn::Checkpoint detector_checkpoint(const Detector& model, int epoch,
                                   std::vector<double> loss_history) {
  return nn::snapshot(model, "det", model.config().fingerprint(), model.config().to_line(), epoch,
                      std::move(loss_history));
}

std::unique_ptr<Detector> load_detector(const nn::Checkpoint& ckpt) {
  if (ckpt.kind != "det") throw ConfigError("not a detector checkpoint: " + ckpt.kind);
  const DetectorConfig cfg = DetectorConfig::parse(ckpt.config);
  if (cfg.fingerprint() != ckpt.fingerprint) {
    throw ConfigError("detector checkpoint fingerprint does not match its config");
  }
  auto model = build_detector(cfg);
  nn::restore(*model, ckpt);
  return model;
}

}  // namespace crabsurvey::det

namespace crabsurvey::det {

nn::Checkpoint train_detector(Detector& model, std::span<const LabeledImage> dataset,
                              const DetTrainConfig& cfg, const DetEpochCallback& on_epoch) {
  if (dataset.empty()) throw std::invalid_argument("train_detector: empty dataset");
  if (cfg.epochs < 0 || cfg.batch_size <= 0 || !(cfg.learning_rate >= 0.0)) {
    throw ConfigError("train_detector: invalid schedule");
  }
  const auto& mc = model.config();
  for (const auto& s : dataset) {
    if (s.image.width() != mc.input_side || s.image.height() != mc.input_side ||
        s.image.channels() != 3) {
      throw ShapeError("train_detector: images must be RGB " + std::to_string(mc.input_side) +
                       " squared");
    }
    for (const auto& b : s.boxes) {
      if (!(b.w > 0) || !(b.h > 0)) throw std::invalid_argument("train_detector: degenerate box");
    }
  }

  std::vector<Tensor> inputs;
  std::vector<std::vector<std::vector<BoundingBox>>> targets;
  for (std::size_t start = 0; start < dataset.size(); start += cfg.batch_size) {
    const std::size_t end =
        std::min(dataset.size(), start + static_cast<std::size_t>(cfg.batch_size));
    std::vector<ImageBuffer> imgs;
    std::vector<std::vector<BoundingBox>> labels;
    for (std::size_t i = start; i < end; ++i) {
      imgs.push_back(dataset[i].image);
      labels.push_back(dataset[i].boxes);
    }
    inputs.push_back(srr::images_to_tensor(imgs));
    targets.push_back(std::move(labels));
  }

  nn::Adam adam(model.parameters(), cfg.learning_rate);
  std::vector<double> history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam.set_lr(nn::step_decay(cfg.learning_rate, epoch, cfg.lr_decay_every));
    double weighted = 0.0;
    for (std::size_t b = 0; b < inputs.size(); ++b) {
      const Tensor loss = detection_loss(model.forward(inputs[b]), targets[b], mc.input_side,
                                         mc.reg_max, cfg.weights, cfg.assigner);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw TrainingDivergence("non-finite detection loss at epoch " + std::to_string(epoch));
      }
      adam.zero_grad();
      loss.backward();
      adam.step();
      weighted += value * static_cast<double>(targets[b].size());
    }
    history.push_back(weighted / static_cast<double>(dataset.size()));
    if (on_epoch) on_epoch(epoch, history.back());
  }
  return detector_checkpoint(model, cfg.epochs, std::move(history));
}

}  // namespace crabsurvey::det
