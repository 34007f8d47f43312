// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include "crabsurvey/srr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "crabsurvey/errors.hpp"
#include "crabsurvey/iq_metrics.hpp"
#include "crabsurvey/nn/optim.hpp"

namespace crabsurvey::srr {

using nn::Conv2d;
using nn::ConvOptions;
using nn::Module;
using nn::Rng;
using nn::Shape;
using nn::Tensor;

namespace {

// Uniform bound 1/sqrt(fan_in): unnormalized residual stacks stay well scaled at init.
const ConvOptions kBody{.init_scale = 0.4082482904638631};

// The reconstruction layer starts small so the untrained model stays close to bicubic.
ConvOptions output_options(const SRModelConfig& cfg) {
  ConvOptions opt = kBody;
  opt.init_scale = cfg.zero_init_output ? 0.0 : 0.1 * kBody.init_scale;
  return opt;
}

// Fixed gain on every reconstruction layer. Residuals are about 1e-2 while Adam moves each
// weight by about the learning rate per step; the gain keeps the two commensurate.
constexpr float kOutputGain = 0.1f;

// conv(width -> C * m^2) followed by depth-to-space.
class SubPixelTail : public Module {
 public:
  SubPixelTail(const SRModelConfig& cfg, Rng& rng)
      : Module("subpixel_tail"),
        factor_(cfg.magnification),
        conv_(add_module<Conv2d>("conv", cfg.width,
                                 cfg.channels * cfg.magnification * cfg.magnification, 3, rng,
                                 output_options(cfg))) {}
  Tensor forward(const Tensor& x) const {
    return nn::scale(nn::pixel_shuffle(conv_.forward(x), factor_), kOutputGain);
  }

 private:
  int factor_;
  const Conv2d& conv_;
};

class SRCNN final : public SRModel {
 public:
  explicit SRCNN(const SRModelConfig& cfg) : SRModel(cfg, "srcnn") {
    Rng rng(cfg.seed);
    extract_ = &add_module<Conv2d>("extract", cfg.channels, cfg.width, 9, rng, kBody);
    map_ = &add_module<Conv2d>("map", cfg.width, std::max(1, cfg.width / 2), 5, rng, kBody);
    rebuild_ = &add_module<Conv2d>("reconstruct", std::max(1, cfg.width / 2), cfg.channels, 5,
                                   rng, output_options(cfg));
  }
  std::vector<Tensor> forward_steps(const Tensor& lr) const override {
    const Tensor up = bicubic_upsample(lr);
    Tensor x = nn::relu(extract_->forward(centered(up)));
    x = nn::relu(map_->forward(x));
    return {nn::add(up, nn::scale(rebuild_->forward(x), kOutputGain))};
  }

 private:
  const Conv2d* extract_;
  const Conv2d* map_;
  const Conv2d* rebuild_;
};

class ResBlock : public Module {
 public:
  ResBlock(int width, float res_scale, Rng& rng)
      : Module("resblock"),
        res_scale_(res_scale),
        a_(add_module<Conv2d>("conv1", width, width, 3, rng, kBody)),
        b_(add_module<Conv2d>("conv2", width, width, 3, rng, kBody)) {}
  Tensor forward(const Tensor& x) const {
    return nn::add(x, nn::scale(b_.forward(nn::relu(a_.forward(x))), res_scale_));
  }

 private:
  float res_scale_;
  const Conv2d& a_;
  const Conv2d& b_;
};

class EDSR final : public SRModel {
 public:
  explicit EDSR(const SRModelConfig& cfg) : SRModel(cfg, "edsr") {
    Rng rng(cfg.seed);
    head_ = &add_module<Conv2d>("head", cfg.channels, cfg.width, 3, rng, kBody);
    for (int i = 0; i < cfg.depth; ++i) {
      blocks_.push_back(&add_module<ResBlock>("block" + std::to_string(i), cfg.width,
                                              static_cast<float>(cfg.res_scale), rng));
    }
    body_end_ = &add_module<Conv2d>("body_end", cfg.width, cfg.width, 3, rng, kBody);
    tail_ = &add_module<SubPixelTail>("tail", cfg, rng);
  }
  std::vector<Tensor> forward_steps(const Tensor& lr) const override {
    const Tensor head = head_->forward(centered(lr));
    Tensor x = head;
    for (const auto* b : blocks_) x = b->forward(x);
    x = nn::add(head, body_end_->forward(x));
    return {nn::add(bicubic_upsample(lr), tail_->forward(x))};
  }

 private:
  const Conv2d* head_;
  std::vector<const ResBlock*> blocks_;
  const Conv2d* body_end_;
  const SubPixelTail* tail_;
};

class DenseBlock : public Module {
 public:
  DenseBlock(int width, int layers, int growth, Rng& rng) : Module("residual_dense_block") {
    for (int i = 0; i < layers; ++i) {
      layers_.push_back(&add_module<Conv2d>("layer" + std::to_string(i), width + i * growth, growth,
                                            3, rng, kBody));
    }
    fuse_ = &add_module<Conv2d>("fuse", width + layers * growth, width, 1, rng, kBody);
  }
  Tensor forward(const Tensor& x) const {
    std::vector<Tensor> feats{x};
    for (const auto* l : layers_) {
      feats.push_back(nn::relu(l->forward(feats.size() == 1 ? x : nn::concat_channels(feats))));
    }
    return nn::add(x, fuse_->forward(nn::concat_channels(feats)));
  }

 private:
  std::vector<const Conv2d*> layers_;
  const Conv2d* fuse_;
};

class RDN final : public SRModel {
 public:
  explicit RDN(const SRModelConfig& cfg) : SRModel(cfg, "rdn") {
    Rng rng(cfg.seed);
    sfe1_ = &add_module<Conv2d>("sfe1", cfg.channels, cfg.width, 3, rng, kBody);
    sfe2_ = &add_module<Conv2d>("sfe2", cfg.width, cfg.width, 3, rng, kBody);
    for (int i = 0; i < cfg.depth; ++i) {
      blocks_.push_back(&add_module<DenseBlock>("rdb" + std::to_string(i), cfg.width,
                                                cfg.layers_per_block, cfg.growth, rng));
    }
    gff1_ = &add_module<Conv2d>("gff1", cfg.width * cfg.depth, cfg.width, 1, rng, kBody);
    gff2_ = &add_module<Conv2d>("gff2", cfg.width, cfg.width, 3, rng, kBody);
    tail_ = &add_module<SubPixelTail>("tail", cfg, rng);
  }
  std::vector<Tensor> forward_steps(const Tensor& lr) const override {
    const Tensor f1 = sfe1_->forward(centered(lr));
    Tensor x = sfe2_->forward(f1);
    std::vector<Tensor> outs;
    for (const auto* b : blocks_) {
      x = b->forward(x);
      outs.push_back(x);
    }
    x = gff2_->forward(gff1_->forward(nn::concat_channels(outs)));
    return {nn::add(bicubic_upsample(lr), tail_->forward(nn::add(f1, x)))};
  }

 private:
  const Conv2d* sfe1_;
  const Conv2d* sfe2_;
  std::vector<const DenseBlock*> blocks_;
  const Conv2d* gff1_;
  const Conv2d* gff2_;
  const SubPixelTail* tail_;
};

// Residual block with squeeze-excitation style channel attention.
class RCAB : public Module {
 public:
  RCAB(int width, int reduction, Rng& rng)
      : Module("rcab"),
        a_(add_module<Conv2d>("conv1", width, width, 3, rng, kBody)),
        b_(add_module<Conv2d>("conv2", width, width, 3, rng, kBody)),
        down_(add_module<Conv2d>("ca_down", width, std::max(1, width / reduction), 1, rng, kBody)),
        up_(add_module<Conv2d>("ca_up", std::max(1, width / reduction), width, 1, rng, kBody)) {
    // Squeeze units start in the active region; with few units and near-zero pooled
    // descriptors a random bias can leave every one of them dead.
    Tensor bias = down_.bias();
    std::fill(bias.data().begin(), bias.data().end(), 0.1f);
  }
  Tensor forward(const Tensor& x) const {
    const Tensor r = b_.forward(nn::relu(a_.forward(x)));
    const Tensor w = nn::sigmoid(up_.forward(nn::relu(down_.forward(nn::global_avg_pool(r)))));
    return nn::add(x, nn::mul(r, w));
  }

 private:
  const Conv2d& a_;
  const Conv2d& b_;
  const Conv2d& down_;
  const Conv2d& up_;
};

class ResidualGroup : public Module {
 public:
  ResidualGroup(int width, int blocks, int reduction, Rng& rng) : Module("residual_group") {
    for (int i = 0; i < blocks; ++i) {
      blocks_.push_back(&add_module<RCAB>("rcab" + std::to_string(i), width, reduction, rng));
    }
    end_ = &add_module<Conv2d>("end", width, width, 3, rng, kBody);
  }
  Tensor forward(const Tensor& x) const {
    Tensor y = x;
    for (const auto* b : blocks_) y = b->forward(y);
    return nn::add(x, end_->forward(y));
  }

 private:
  std::vector<const RCAB*> blocks_;
  const Conv2d* end_;
};

class RCAN final : public SRModel {
 public:
  explicit RCAN(const SRModelConfig& cfg) : SRModel(cfg, "rcan") {
    Rng rng(cfg.seed);
    head_ = &add_module<Conv2d>("head", cfg.channels, cfg.width, 3, rng, kBody);
    for (int i = 0; i < cfg.depth; ++i) {
      groups_.push_back(&add_module<ResidualGroup>("group" + std::to_string(i), cfg.width,
                                                   cfg.layers_per_block, cfg.reduction, rng));
    }
    body_end_ = &add_module<Conv2d>("body_end", cfg.width, cfg.width, 3, rng, kBody);
    tail_ = &add_module<SubPixelTail>("tail", cfg, rng);
  }
  std::vector<Tensor> forward_steps(const Tensor& lr) const override {
    const Tensor head = head_->forward(centered(lr));
    Tensor x = head;
    for (const auto* g : groups_) x = g->forward(x);
    x = nn::add(head, body_end_->forward(x));
    return {nn::add(bicubic_upsample(lr), tail_->forward(x))};
  }

 private:
  const Conv2d* head_;
  std::vector<const ResidualGroup*> groups_;
  const Conv2d* body_end_;
  const SubPixelTail* tail_;
};

// Hidden state of the previous iteration is fused with the shallow features, refined by
// a short conv stack and fed back.
class FeedbackBlock : public Module {
 public:
  FeedbackBlock(int width, int layers, Rng& rng) : Module("feedback_block") {
    compress_ = &add_module<Conv2d>("compress", 2 * width, width, 1, rng, kBody);
    for (int i = 0; i < layers; ++i) {
      layers_.push_back(
          &add_module<Conv2d>("layer" + std::to_string(i), width, width, 3, rng, kBody));
    }
  }
  Tensor forward(const Tensor& features, const Tensor& hidden) const {
    Tensor x = nn::relu(compress_->forward(nn::concat_channels({features, hidden})));
    const Tensor entry = x;
    for (const auto* l : layers_) x = nn::relu(l->forward(x));
    return nn::add(entry, x);
  }

 private:
  const Conv2d* compress_;
  std::vector<const Conv2d*> layers_;
};

class SRFBN final : public SRModel {
 public:
  explicit SRFBN(const SRModelConfig& cfg) : SRModel(cfg, "srfbn") {
    Rng rng(cfg.seed);
    extract_ = &add_module<Conv2d>("extract", cfg.channels, cfg.width, 3, rng, kBody);
    block_ = &add_module<FeedbackBlock>("feedback", cfg.width, cfg.depth, rng);
    tail_ = &add_module<SubPixelTail>("tail", cfg, rng);
  }
  std::vector<Tensor> forward_steps(const Tensor& lr) const override {
    const Tensor up = bicubic_upsample(lr);
    const Tensor features = nn::relu(extract_->forward(centered(lr)));
    Tensor hidden = features;
    std::vector<Tensor> outs;
    for (int t = 0; t < config().feedback_steps; ++t) {
      hidden = block_->forward(features, hidden);
      outs.push_back(nn::add(up, tail_->forward(hidden)));
    }
    return outs;
  }

 private:
  const Conv2d* extract_;
  const FeedbackBlock* block_;
  const SubPixelTail* tail_;
};

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": " + v);
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": " + v);
  }
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates with an explicit draw so the order does not depend on the library's
  // std::shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace

const char* architecture_name(SRArchitecture arch) {
  switch (arch) {
    case SRArchitecture::kSRCNN: return "SRCNN";
    case SRArchitecture::kEDSR: return "EDSR";
    case SRArchitecture::kRDN: return "RDN";
    case SRArchitecture::kRCAN: return "RCAN";
    case SRArchitecture::kSRFBN: return "SRFBN";
  }
  return "?";
}

SRArchitecture parse_architecture(const std::string& name) {
  const std::string n = lower(name);
  for (auto a : kAllArchitectures) {
    if (lower(architecture_name(a)) == n) return a;
  }
  throw ConfigError("unknown SR architecture: " + name);
}

void SRModelConfig::validate() const {
  if (magnification < 2 || magnification > 5) {
    throw ConfigError("magnification must be in 2..5, got " + std::to_string(magnification));
  }
  if (channels != 1 && channels != 3) throw ConfigError("channels must be 1 or 3");
  if (width <= 0 || depth <= 0 || layers_per_block <= 0 || growth <= 0 || reduction <= 0 ||
      feedback_steps <= 0) {
    throw ConfigError("SR model sizes must be positive");
  }
  if (reduction > width) throw ConfigError("reduction larger than width");
  if (!(res_scale > 0) || !std::isfinite(res_scale)) throw ConfigError("res_scale must be > 0");
}

std::string SRModelConfig::to_line() const {
  std::ostringstream os;
  os.precision(17);
  os << "arch=" << architecture_name(architecture) << " m=" << magnification
     << " channels=" << channels << " width=" << width << " depth=" << depth
     << " layers=" << layers_per_block << " growth=" << growth << " reduction=" << reduction
     << " steps=" << feedback_steps << " res_scale=" << res_scale
     << " zero_init_output=" << (zero_init_output ? 1 : 0) << " seed=" << seed;
  return os.str();
}

SRModelConfig SRModelConfig::parse(const std::string& line) {
  SRModelConfig cfg;
  std::istringstream is(line);
  std::string token;
  while (is >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got " + token);
    const std::string key = token.substr(0, eq), value = token.substr(eq + 1);
    if (key == "arch") cfg.architecture = parse_architecture(value);
    else if (key == "m") cfg.magnification = parse_int(key, value);
    else if (key == "channels") cfg.channels = parse_int(key, value);
    else if (key == "width") cfg.width = parse_int(key, value);
    else if (key == "depth") cfg.depth = parse_int(key, value);
    else if (key == "layers") cfg.layers_per_block = parse_int(key, value);
    else if (key == "growth") cfg.growth = parse_int(key, value);
    else if (key == "reduction") cfg.reduction = parse_int(key, value);
    else if (key == "steps") cfg.feedback_steps = parse_int(key, value);
    else if (key == "res_scale") cfg.res_scale = parse_double(key, value);
    else if (key == "zero_init_output") cfg.zero_init_output = parse_int(key, value) != 0;
    else if (key == "seed") cfg.seed = std::stoull(value);
    else throw ConfigError("unknown SR model key: " + key);
  }
  cfg.validate();
  return cfg;
}

std::string SRModelConfig::fingerprint() const { return nn::fnv1a_hex(to_line()); }

SRModelConfig SRModelConfig::desk(SRArchitecture arch, int magnification) {
  SRModelConfig cfg;
  cfg.architecture = arch;
  cfg.magnification = magnification;
  switch (arch) {
    case SRArchitecture::kSRCNN:
      cfg.width = 32;
      break;
    case SRArchitecture::kEDSR:
      cfg.width = 32;
      cfg.depth = 4;
      break;
    case SRArchitecture::kRDN:
      cfg.width = 32;
      cfg.depth = 4;
      cfg.layers_per_block = 4;
      cfg.growth = 16;
      break;
    case SRArchitecture::kRCAN:
      cfg.width = 32;
      cfg.depth = 2;
      cfg.layers_per_block = 2;
      cfg.reduction = 8;
      break;
    case SRArchitecture::kSRFBN:
      cfg.width = 32;
      cfg.depth = 3;
      cfg.feedback_steps = 3;
      break;
  }
  return cfg;
}

SRModelConfig SRModelConfig::full(SRArchitecture arch, int magnification) {
  SRModelConfig cfg = desk(arch, magnification);
  switch (arch) {
    case SRArchitecture::kSRCNN:
      cfg.width = 64;
      break;
    case SRArchitecture::kEDSR:
      cfg.width = 64;
      cfg.depth = 16;
      break;
    case SRArchitecture::kRDN:
      cfg.width = 64;
      cfg.depth = 16;
      cfg.layers_per_block = 8;
      cfg.growth = 64;
      break;
    case SRArchitecture::kRCAN:
      cfg.width = 64;
      cfg.depth = 10;
      cfg.layers_per_block = 20;
      cfg.reduction = 16;
      break;
    case SRArchitecture::kSRFBN:
      cfg.width = 64;
      cfg.depth = 6;
      cfg.feedback_steps = 4;
      break;
  }
  return cfg;
}

SRModel::SRModel(SRModelConfig config, std::string kind)
    : Module(std::move(kind)), config_(std::move(config)) {
  config_.validate();
}

Tensor SRModel::centered(const Tensor& x) {
  return nn::add(x, Tensor::full(Shape{1, 1, 1, 1}, -0.5f));
}

Tensor SRModel::bicubic_upsample(const Tensor& lr) const {
  const Shape s = lr.shape();
  if (s.c != config_.channels) {
    throw ShapeError("model expects " + std::to_string(config_.channels) + " channels, got " +
                     std::to_string(s.c));
  }
  const int m = config_.magnification;
  std::vector<ImageBuffer> ups;
  ups.reserve(s.n);
  for (int i = 0; i < s.n; ++i) {
    ImageBuffer img(s.w, s.h, s.c);
    const auto d = lr.data();
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const float v = d[((static_cast<std::size_t>(i) * s.c + c) * s.h + y) * s.w + x];
          img.at(x, y, c) = std::clamp(static_cast<double>(v), 0.0, 1.0);
        }
    ups.push_back(resize(img, s.w * m, s.h * m));
  }
  return images_to_tensor(ups);
}

std::unique_ptr<SRModel> build_sr_model(const SRModelConfig& config) {
  config.validate();
  switch (config.architecture) {
    case SRArchitecture::kSRCNN: return std::make_unique<SRCNN>(config);
    case SRArchitecture::kEDSR: return std::make_unique<EDSR>(config);
    case SRArchitecture::kRDN: return std::make_unique<RDN>(config);
    case SRArchitecture::kRCAN: return std::make_unique<RCAN>(config);
    case SRArchitecture::kSRFBN: return std::make_unique<SRFBN>(config);
  }
  throw ConfigError("unknown SR architecture");
}

Tensor images_to_tensor(std::span<const ImageBuffer> images) {
  if (images.empty()) throw ShapeError("no images to stack");
  const auto& first = images.front();
  const Shape s{static_cast<int>(images.size()), first.channels(), first.height(), first.width()};
  std::vector<float> v(s.numel());
  std::size_t k = 0;
  for (const auto& img : images) {
    if (!img.same_shape(first)) throw ShapeError("images in a batch must share a shape");
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) v[k++] = static_cast<float>(img.at(x, y, c));
  }
  return Tensor::from(s, std::move(v));
}

ImageBuffer tensor_to_image(const Tensor& t, int index) {
  const Shape s = t.shape();
  if (index < 0 || index >= s.n) throw ShapeError("batch index out of range");
  ImageBuffer img(s.w, s.h, s.c);
  const auto d = t.data();
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        const float v = d[((static_cast<std::size_t>(index) * s.c + c) * s.h + y) * s.w + x];
        img.at(x, y, c) = std::clamp(static_cast<double>(v), 0.0, 1.0);
      }
  return img;
}

double l1_loss(const ImageBuffer& output, const ImageBuffer& reference) {
  if (!output.same_shape(reference)) throw ShapeError("l1_loss: shape mismatch");
  const auto a = output.pixels(), b = reference.pixels();
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

std::vector<SRPair> make_pairs(std::span<const ImageBuffer> hr_images, int factor) {
  std::vector<SRPair> pairs;
  for (const auto& hr : hr_images) {
    ImageBuffer cropped = center_crop_divisible(hr, factor);
    ImageBuffer lr = degrade(cropped, factor);
    pairs.push_back({std::move(lr), std::move(cropped)});
  }
  return pairs;
}

void SRTrainConfig::validate() const {
  if (max_epochs < 0 || max_epochs > 300) throw ConfigError("max_epochs must be in 0..300");
  if (batch_size <= 0 || patch_size <= 0 || patches_per_pair <= 0 || lr_decay_every <= 0) {
    throw ConfigError("SR training sizes must be positive");
  }
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be finite and >= 0");
  }
}

nn::Checkpoint sr_checkpoint(const SRModel& model, int epoch, std::vector<double> loss_history) {
  return nn::snapshot(model, "sr:" + std::string(architecture_name(model.config().architecture)),
                      model.config().fingerprint(), model.config().to_line(), epoch,
                      std::move(loss_history));
}

nn::Checkpoint train_sr(SRModel& model, std::span<const SRPair> pairs, const SRTrainConfig& cfg,
                        const EpochCallback& on_epoch) {
  cfg.validate();
  if (pairs.empty()) throw std::invalid_argument("train_sr: empty dataset");
  const int m = model.magnification();
  int patch = cfg.patch_size;
  for (const auto& p : pairs) {
    if (p.hr.width() != m * p.lr.width() || p.hr.height() != m * p.lr.height() ||
        p.hr.channels() != p.lr.channels()) {
      throw ShapeError("train_sr: HR must be exactly m times LR");
    }
    patch = std::min({patch, p.lr.width(), p.lr.height()});
  }

  Rng rng(cfg.seed);
  std::vector<ImageBuffer> lr_patches, hr_patches;
  for (const auto& p : pairs) {
    for (int k = 0; k < cfg.patches_per_pair; ++k) {
      const int x0 = static_cast<int>(rng() % static_cast<std::uint64_t>(p.lr.width() - patch + 1));
      const int y0 =
          static_cast<int>(rng() % static_cast<std::uint64_t>(p.lr.height() - patch + 1));
      lr_patches.push_back(p.lr.crop(x0, y0, patch, patch));
      hr_patches.push_back(p.hr.crop(x0 * m, y0 * m, patch * m, patch * m));
    }
  }

  nn::Adam adam(model.parameters(), cfg.learning_rate);
  std::vector<double> history;
  const std::size_t n = lr_patches.size();
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    adam.set_lr(nn::step_decay(cfg.learning_rate, epoch, cfg.lr_decay_every));
    const auto order = shuffled(n, rng);
    double weighted = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<ImageBuffer> lr_batch, hr_batch;
      for (std::size_t i = start; i < end; ++i) {
        lr_batch.push_back(lr_patches[order[i]]);
        hr_batch.push_back(hr_patches[order[i]]);
      }
      const Tensor lr = images_to_tensor(lr_batch);
      const Tensor hr = images_to_tensor(hr_batch);
      const auto outs = model.forward_steps(lr);
      std::vector<Tensor> terms;
      for (const auto& o : outs) terms.push_back(nn::l1_loss(o, hr));
      const Tensor loss = nn::weighted_sum(
          terms, std::vector<float>(terms.size(), 1.0f / static_cast<float>(terms.size())));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw TrainingDivergence("non-finite SR loss at epoch " + std::to_string(epoch));
      }
      adam.zero_grad();
      loss.backward();
      adam.step();
      weighted += value * static_cast<double>(end - start);
    }
    history.push_back(weighted / static_cast<double>(n));
    if (on_epoch) on_epoch(epoch, history.back());
  }
  return sr_checkpoint(model, cfg.max_epochs, std::move(history));
}

std::unique_ptr<SRModel> load_sr_model(const nn::Checkpoint& ckpt) {
  if (ckpt.kind.rfind("sr:", 0) != 0) throw ConfigError("not an SR checkpoint: " + ckpt.kind);
  const SRModelConfig cfg = SRModelConfig::parse(ckpt.config);
  if (cfg.fingerprint() != ckpt.fingerprint) {
    throw ConfigError("SR checkpoint fingerprint does not match its config");
  }
  auto model = build_sr_model(cfg);
  nn::restore(*model, ckpt);
  return model;
}

ImageBuffer reconstruct(const SRModel& model, const ImageBuffer& lr) {
  if (lr.channels() != model.config().channels) {
    throw ShapeError("reconstruct: model expects " + std::to_string(model.config().channels) +
                     " channels");
  }
  nn::NoGradGuard guard;
  const ImageBuffer batch[] = {lr};
  return tensor_to_image(model.forward(images_to_tensor(batch)));
}

OverfitScore score_pairs(const SRModel& model, std::span<const SRPair> pairs) {
  OverfitScore s;
  if (pairs.empty()) return s;
  const int m = model.magnification();
  for (const auto& p : pairs) {
    s.model_psnr += iq::psnr(p.hr, reconstruct(model, p.lr));
    s.bicubic_psnr += iq::psnr(p.hr, resize(p.lr, p.lr.width() * m, p.lr.height() * m));
  }
  s.model_psnr /= static_cast<double>(pairs.size());
  s.bicubic_psnr /= static_cast<double>(pairs.size());
  return s;
}

void write_loss_log(const std::vector<double>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,mean_l1\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    out << i << ',' << iq::format_number(history[i], 8) << '\n';
  }
}

}  // namespace crabsurvey::srr
