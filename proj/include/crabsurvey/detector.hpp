// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "crabsurvey/nn/checkpoint.hpp"
#include "crabsurvey/nn/module.hpp"
#include "crabsurvey/tiling.hpp"

namespace crabsurvey::det {

using nn::Tensor;

/// Block placed at the two designated top-down neck fusion points ("layer 11" and
/// "layer 12"): after each upsample+concat, before the C2f stage.
enum class NeckFusion {
  kNone,    // plain concat feeding C2f, as in the unmodified baseline
  kDense,   // 3x3 dense convolution with the same channel plan as GSConv
  kGSConv,  // GSConv block
};

struct DetectorConfig {
  bool four_heads = false;
  bool gsconv = false;
  bool eca = false;
  /// Adds the spatial branch to each ECA block.
  bool eca_spatial = false;
  /// Replaces the GSConv positions with dense convolutions (parameter-count twin).
  /// Ignored when gsconv is set.
  bool dense_fusion = false;
  /// Channel shuffle at the end of each GSConv block.
  bool gsconv_shuffle = true;
  double width_multiplier = 0.5;
  double depth_multiplier = 0.33;
  int max_channels = 1024;
  int num_classes = kNumClasses;
  /// Bins of the distance distribution per box side.
  int reg_max = 16;
  int input_side = 640;
  float conf_threshold = 0.25f;
  float nms_iou = 0.45f;
  std::uint64_t seed = 0;

  NeckFusion neck_fusion() const {
    return gsconv ? NeckFusion::kGSConv : dense_fusion ? NeckFusion::kDense : NeckFusion::kNone;
  }
  /// Output strides, finest first.
  std::vector<int> strides() const;
  /// Throws ConfigError.
  void validate() const;
  std::string to_line() const;
  static DetectorConfig parse(const std::string& line);
  std::string fingerprint() const;

  /// The four ablation variants: baseline, +4 heads, +GSConv, +ECA.
  static DetectorConfig ablation_variant(int index);
  /// Small multipliers for CPU overfitting experiments.
  static DetectorConfig tiny();
};

/// Rounds scaled channel counts up to a multiple of 8.
int scaled_channels(int base, const DetectorConfig& cfg);
int scaled_depth(int base, const DetectorConfig& cfg);

/// Conv + bias + SiLU.
class ConvBlock : public nn::Module {
 public:
  ConvBlock(int in, int out, int kernel, int stride, nn::Rng& rng, int groups = 1);
  Tensor forward(const Tensor& x) const;

 private:
  const nn::Conv2d& conv_;
};

/// Depthwise-separable convolution (depthwise k x k, then pointwise to out/2) followed by
/// a depthwise 3x3 transposed convolution on that result; both halves are concatenated and
/// optionally channel-shuffled. Stride applies to the depthwise stage.
class GSConv : public nn::Module {
 public:
  GSConv(int in, int out, int kernel, int stride, nn::Rng& rng, bool shuffle = true);
  Tensor forward(const Tensor& x) const;
  /// Same computation without the SiLU activations.
  Tensor forward_linear(const Tensor& x) const;

 private:
  Tensor run(const Tensor& x, bool activate) const;
  bool shuffle_;
  const nn::Conv2d& depthwise_;
  const nn::Conv2d& pointwise_;
  const nn::ConvTranspose2d& transposed_;
};

/// Efficient channel attention: global pooling, a k-tap 1-D convolution across channels
/// (k adapted to the channel count), and a sigmoid gate. With the spatial branch, half
/// the channels are gated spatially (group norm per channel, affine, sigmoid) and the
/// halves are channel-shuffled back together.
class ECA : public nn::Module {
 public:
  ECA(int channels, nn::Rng& rng, bool spatial = false);
  Tensor forward(const Tensor& x) const;
  /// Channel weights in (0, 1), shape (N, C', 1, 1) where C' is the gated channel count.
  Tensor channel_weights(const Tensor& x) const;
  int kernel_size() const { return k_; }
  /// 1-D kernel taps; exposed for tests.
  Tensor kernel() const { return kernel_; }

  static int adaptive_kernel(int channels);

 private:
  bool spatial_;
  int channels_;
  int k_;
  Tensor kernel_;
  const nn::ChannelParameter* gamma_ = nullptr;
  const nn::ChannelParameter* beta_ = nullptr;
};

/// Raw per-level head output: (N, 4 * reg_max + num_classes, side, side). Box channels
/// come first as four groups of reg_max logits (left, top, right, bottom distances in
/// stride units); class logits follow.
struct LevelOutput {
  int stride = 0;
  Tensor raw;
};

class Detector : public nn::Module {
 public:
  explicit Detector(DetectorConfig config);
  ~Detector() override;
  const DetectorConfig& config() const { return config_; }
  std::vector<LevelOutput> forward(const Tensor& images) const;
  /// Names of the designated fusion blocks, e.g. "neck.layer11".
  std::vector<std::string> fusion_layer_names() const;

 private:
  struct Impl;
  DetectorConfig config_;
  std::unique_ptr<Impl> impl_;
};

std::unique_ptr<Detector> build_detector(const DetectorConfig& config);

/// Greedy NMS in descending confidence; class-wise unless `class_agnostic`.
std::vector<BoundingBox> nms(std::vector<BoundingBox> boxes, double iou_threshold,
                             bool class_agnostic = false);

/// Cells whose best class score exceeds `conf_threshold` become boxes normalized to the
/// input side and clipped to [0, 1]; class-wise NMS; descending confidence.
std::vector<std::vector<BoundingBox>> decode(const std::vector<LevelOutput>& outputs,
                                             int input_side, int reg_max, double conf_threshold,
                                             double nms_iou);

/// Resizes to the configured input side, runs the network and decodes.
std::vector<BoundingBox> detect(const Detector& model, const ImageBuffer& image);
std::vector<std::vector<BoundingBox>> detect_batch(const Detector& model,
                                                   std::span<const ImageBuffer> images);

struct LossWeights {
  float box = 7.5f;
  float cls = 0.5f;
  float dfl = 1.5f;
};

struct AssignerConfig {
  int top_k = 10;
  double alpha = 0.5;
  double beta = 6.0;
};

struct LossBreakdown {
  double box = 0.0;
  double cls = 0.0;
  double dfl = 0.0;
  int positives = 0;
};

/// Task-aligned assignment plus BCE (classes), CIoU (boxes) and distribution focal loss.
/// `targets[i]` holds normalized boxes of image i. Returns a differentiable scalar.
Tensor detection_loss(const std::vector<LevelOutput>& outputs,
                      const std::vector<std::vector<BoundingBox>>& targets, int input_side,
                      int reg_max, const LossWeights& weights = {},
                      const AssignerConfig& assigner = {}, LossBreakdown* breakdown = nullptr);

/// Complete IoU of two corner boxes and its gradient with respect to the first.
struct CIoUResult {
  double value = 0.0;
  std::array<double, 4> grad{};
};
CIoUResult complete_iou(const std::array<double, 4>& pred, const std::array<double, 4>& target);

struct DetTrainConfig {
  int epochs = 100;
  int batch_size = 8;
  double learning_rate = 1e-3;
  /// Learning rate halves every this many epochs.
  int lr_decay_every = 1000;
  LossWeights weights;
  AssignerConfig assigner;
};

using DetEpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Adam over a fixed, unshuffled batch partition. Images must be input_side squared;
/// labels normalized with positive extents. Throws TrainingDivergence on a non-finite loss.
nn::Checkpoint train_detector(Detector& model, std::span<const LabeledImage> dataset,
                              const DetTrainConfig& cfg, const DetEpochCallback& on_epoch = {});

nn::Checkpoint detector_checkpoint(const Detector& model, int epoch = 0,
                                   std::vector<double> loss_history = {});
std::unique_ptr<Detector> load_detector(const nn::Checkpoint& ckpt);

}  // namespace crabsurvey::det
