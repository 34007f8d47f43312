// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "crabsurvey/nn/tensor.hpp"

namespace crabsurvey::nn {

/// Adam with bias correction. Parameters without a gradient are skipped for the step.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void step();
  void zero_grad();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long step_ = 0;
};

/// Step decay: base * factor^(floor(epoch / every)).
double step_decay(double base_lr, int epoch, int every, double factor = 0.5);

}  // namespace crabsurvey::nn
