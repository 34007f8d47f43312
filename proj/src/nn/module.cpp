// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include "crabsurvey/nn/module.hpp"

#include <algorithm>
#include <cmath>

#include "crabsurvey/errors.hpp"

namespace crabsurvey::nn {

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<float> v(shape.numel());
  for (float& x : v) x = static_cast<float>(dist(rng));
  return Tensor::from(shape, std::move(v), true);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> Module::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  collect("", out);
  return out;
}

void Module::collect(const std::string& prefix,
                     std::vector<std::pair<std::string, Tensor>>& out) const {
  for (const auto& [name, t] : params_) out.emplace_back(prefix + name, t);
  for (const auto& [name, child] : children_) child->collect(prefix + name + ".", out);
}

std::vector<Tensor> Module::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::size_t Module::parameter_count() const {
  std::size_t total = 0;
  for (const auto& t : parameters()) total += t.numel();
  return total;
}

std::vector<std::string> Module::layer_kinds() const {
  std::vector<std::string> out{kind_};
  for (const auto& [name, child] : children_) {
    auto sub = child->layer_kinds();
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

void Module::zero_grad() {
  for (auto& t : parameters()) t.zero_grad();
}

Tensor Module::add_parameter(std::string name, Tensor t) {
  params_.emplace_back(std::move(name), t);
  return t;
}

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, Rng& rng, ConvOptions opt)
    : Module("conv2d"), in_(in_channels), out_(out_channels) {
  if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || opt.groups <= 0 ||
      in_channels % opt.groups != 0 || out_channels % opt.groups != 0) {
    throw ShapeError("invalid conv2d plan " + std::to_string(in_channels) + "->" +
                     std::to_string(out_channels) + " k" + std::to_string(kernel));
  }
  const int pad = opt.pad < 0 ? kernel / 2 : opt.pad;
  geom_ = ConvGeometry{opt.stride, pad, pad, opt.groups};
  const int fan_in = in_channels / opt.groups * kernel * kernel;
  const double bound = opt.init_scale * std::sqrt(6.0 / fan_in);
  weight_ = add_parameter(
      "weight",
      uniform_tensor(Shape{out_channels, in_channels / opt.groups, kernel, kernel}, bound, rng));
  if (opt.bias) bias_ = add_parameter("bias", Tensor::zeros(Shape{1, out_channels, 1, 1}, true));
}

Tensor Conv2d::forward(const Tensor& x) const { return conv2d(x, weight_, bias_, geom_); }

ConvTranspose2d::ConvTranspose2d(int in_channels, int out_channels, int kernel, Rng& rng,
                                 ConvOptions opt)
    : Module("conv_transpose2d") {
  if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || opt.groups <= 0 ||
      in_channels % opt.groups != 0 || out_channels % opt.groups != 0) {
    throw ShapeError("invalid conv_transpose2d plan");
  }
  const int pad = opt.pad < 0 ? kernel / 2 : opt.pad;
  geom_ = ConvGeometry{opt.stride, pad, pad, opt.groups};
  // Each output position receives in/groups * k*k / stride^2 contributions on average.
  const int fan_in = std::max(1, in_channels / opt.groups * kernel * kernel /
                                     (opt.stride * opt.stride));
  const double bound = opt.init_scale * std::sqrt(6.0 / fan_in);
  weight_ = add_parameter(
      "weight",
      uniform_tensor(Shape{in_channels, out_channels / opt.groups, kernel, kernel}, bound, rng));
  if (opt.bias) bias_ = add_parameter("bias", Tensor::zeros(Shape{1, out_channels, 1, 1}, true));
}

Tensor ConvTranspose2d::forward(const Tensor& x) const {
  return conv_transpose2d(x, weight_, bias_, geom_);
}

ChannelParameter::ChannelParameter(int channels, float init, std::string kind)
    : Module(std::move(kind)) {
  value_ = add_parameter("value", Tensor::full(Shape{1, channels, 1, 1}, init, true));
}

}  // namespace crabsurvey::nn
