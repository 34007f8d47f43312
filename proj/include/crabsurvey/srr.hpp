// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crabsurvey/imaging.hpp"
#include "crabsurvey/nn/checkpoint.hpp"
#include "crabsurvey/nn/module.hpp"

namespace crabsurvey::srr {

enum class SRArchitecture { kSRCNN, kEDSR, kRDN, kRCAN, kSRFBN };

inline constexpr SRArchitecture kAllArchitectures[] = {
    SRArchitecture::kSRCNN, SRArchitecture::kEDSR, SRArchitecture::kRDN, SRArchitecture::kRCAN,
    SRArchitecture::kSRFBN};

const char* architecture_name(SRArchitecture arch);
/// Case-insensitive; throws ConfigError on unknown names.
SRArchitecture parse_architecture(const std::string& name);

struct SRModelConfig {
  SRArchitecture architecture = SRArchitecture::kRDN;
  int magnification = 2;
  int channels = 3;
  /// Feature channels.
  int width = 32;
  /// EDSR residual blocks, RDN dense blocks, RCAN residual groups, SRFBN block layers.
  /// SRCNN ignores it.
  int depth = 4;
  /// RDN layers per dense block; RCAN blocks per group.
  int layers_per_block = 4;
  /// RDN growth rate.
  int growth = 16;
  /// RCAN channel-attention reduction ratio.
  int reduction = 4;
  /// SRFBN feedback iterations.
  int feedback_steps = 3;
  /// EDSR residual scaling.
  double res_scale = 0.1;
  /// Start the reconstruction layer at zero so the untrained model is plain bicubic.
  bool zero_init_output = false;
  std::uint64_t seed = 0;

  /// Throws ConfigError on invalid values.
  void validate() const;
  /// Single-line key=value rendering; parse() inverts it.
  std::string to_line() const;
  static SRModelConfig parse(const std::string& line);
  /// Hash of to_line(); checkpoints carry it.
  std::string fingerprint() const;

  /// Small widths that train on a laptop CPU.
  static SRModelConfig desk(SRArchitecture arch, int magnification);
  /// Widths of the published reference designs.
  static SRModelConfig full(SRArchitecture arch, int magnification);
};

/// Every model predicts a residual over bicubic upsampling of its input.
class SRModel : public nn::Module {
 public:
  SRModel(SRModelConfig config, std::string kind);

  const SRModelConfig& config() const { return config_; }
  int magnification() const { return config_.magnification; }

  /// One reconstruction per refinement step (a single one except SRFBN); the last is final.
  virtual std::vector<nn::Tensor> forward_steps(const nn::Tensor& lr) const = 0;
  nn::Tensor forward(const nn::Tensor& lr) const { return forward_steps(lr).back(); }

 protected:
  /// Constant (non-differentiable) bicubic upsampling by the configured factor.
  nn::Tensor bicubic_upsample(const nn::Tensor& lr) const;
  /// Shifts [0, 1] intensities to zero mean before the feature layers.
  static nn::Tensor centered(const nn::Tensor& x);

 private:
  SRModelConfig config_;
};

std::unique_ptr<SRModel> build_sr_model(const SRModelConfig& config);

/// Stacks equally sized images into an NCHW tensor.
nn::Tensor images_to_tensor(std::span<const ImageBuffer> images);
/// Batch item `index` as an image, clamped to [0, 1].
ImageBuffer tensor_to_image(const nn::Tensor& t, int index = 0);

/// Mean absolute difference over every element (all channels and pixels).
double l1_loss(const ImageBuffer& output, const ImageBuffer& reference);

struct SRPair {
  ImageBuffer lr;
  ImageBuffer hr;
};

/// Builds (LR, HR) pairs by degrading each HR image by `factor`; HR is center-cropped
/// to a factor-divisible size.
std::vector<SRPair> make_pairs(std::span<const ImageBuffer> hr_images, int factor);

struct SRTrainConfig {
  int max_epochs = 300;
  int batch_size = 16;
  double learning_rate = 1e-4;
  /// Learning rate halves every this many epochs.
  int lr_decay_every = 100;
  /// LR patch side; HR patches are magnification times larger.
  int patch_size = 40;
  int patches_per_pair = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

using EpochCallback = std::function<void(int epoch, double mean_l1)>;

/// Adam on L1 over a fixed patch set, reshuffled each epoch. SRFBN averages the loss over
/// its refinement steps. Throws TrainingDivergence on a non-finite loss.
nn::Checkpoint train_sr(SRModel& model, std::span<const SRPair> pairs, const SRTrainConfig& cfg,
                        const EpochCallback& on_epoch = {});

/// Untrained-state checkpoint (epoch 0, empty history).
nn::Checkpoint sr_checkpoint(const SRModel& model, int epoch = 0,
                             std::vector<double> loss_history = {});

/// Rebuilds the model recorded in `ckpt`; throws ConfigError on kind or fingerprint mismatch.
std::unique_ptr<SRModel> load_sr_model(const nn::Checkpoint& ckpt);

/// Super-resolves one image; output is magnification times larger and clamped to [0, 1].
ImageBuffer reconstruct(const SRModel& model, const ImageBuffer& lr);

/// Mean training-set PSNR of the model and of plain bicubic upsampling.
struct OverfitScore {
  double model_psnr = 0.0;
  double bicubic_psnr = 0.0;
};
OverfitScore score_pairs(const SRModel& model, std::span<const SRPair> pairs);

/// Writes "epoch,mean_l1" rows.
void write_loss_log(const std::vector<double>& history, const std::filesystem::path& path);

}  // namespace crabsurvey::srr
