// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "crabsurvey/nn/ops.hpp"
#include "crabsurvey/nn/tensor.hpp"

namespace crabsurvey::nn {

using Rng = std::mt19937_64;

/// Owner of named parameters and child modules.
///
/// Children live on the heap, so references returned by `add_module` stay valid for
/// the lifetime of the parent. Modules are neither copyable nor movable.
class Module {
 public:
  explicit Module(std::string kind = "module") : kind_(std::move(kind)) {}
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  /// Depth-first, registration order, dotted names.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

  /// Kinds of this module and all descendants, depth-first.
  std::vector<std::string> layer_kinds() const;
  const std::string& kind() const { return kind_; }

  void zero_grad();

 protected:
  /// Registers `t` and returns an alias of it.
  Tensor add_parameter(std::string name, Tensor t);

  template <class M, class... Args>
  M& add_module(std::string name, Args&&... args) {
    auto child = std::make_unique<M>(std::forward<Args>(args)...);
    M& ref = *child;
    children_.emplace_back(std::move(name), std::move(child));
    return ref;
  }

 private:
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out) const;

  std::string kind_;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::pair<std::string, std::unique_ptr<Module>>> children_;
};

struct ConvOptions {
  int stride = 1;
  /// -1 selects "same" padding k / 2.
  int pad = -1;
  int groups = 1;
  bool bias = true;
  /// Uniform init bound = init_scale * sqrt(6 / fan_in).
  double init_scale = 1.0;
};

class Conv2d : public Module {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, Rng& rng, ConvOptions opt = {});
  Tensor forward(const Tensor& x) const;

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  const Tensor& weight() const { return weight_; }
  /// Undefined when constructed without bias.
  const Tensor& bias() const { return bias_; }

 private:
  int in_, out_;
  ConvGeometry geom_;
  Tensor weight_;
  Tensor bias_;
};

class ConvTranspose2d : public Module {
 public:
  ConvTranspose2d(int in_channels, int out_channels, int kernel, Rng& rng, ConvOptions opt = {});
  Tensor forward(const Tensor& x) const;

 private:
  ConvGeometry geom_;
  Tensor weight_;
  Tensor bias_;
};

/// Trainable per-channel vector shaped {1, C, 1, 1}.
class ChannelParameter : public Module {
 public:
  ChannelParameter(int channels, float init, std::string kind = "channel_param");
  const Tensor& value() const { return value_; }

 private:
  Tensor value_;
};

}  // namespace crabsurvey::nn
