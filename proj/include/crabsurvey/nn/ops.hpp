// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "crabsurvey/nn/tensor.hpp"

namespace crabsurvey::nn {

struct ConvGeometry {
  int stride = 1;
  int pad_h = 0;
  int pad_w = 0;
  int groups = 1;
};

/// Cross-correlation. weight: {Cout, Cin/groups, kh, kw}; bias (optional): {1, Cout, 1, 1}.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, ConvGeometry geom);

/// Gradient-of-convolution ("deconvolution"). weight: {Cin, Cout/groups, kh, kw}.
/// Output side = (in - 1) * stride - 2 * pad + k.
Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        ConvGeometry geom);

/// Elementwise with `b` broadcast along every axis where it has extent 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);

Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor slice_channels(const Tensor& x, int start, int count);
/// Reorders channels (g, c/g) -> (c/g, g).
Tensor channel_shuffle(const Tensor& x, int groups);

/// Depth-to-space: {N, C*r*r, H, W} -> {N, C, H*r, W*r}.
Tensor pixel_shuffle(const Tensor& x, int factor);
Tensor upsample_nearest(const Tensor& x, int factor);

Tensor global_avg_pool(const Tensor& x);
Tensor max_pool2d(const Tensor& x, int kernel, int stride, int pad);

Tensor reshape(const Tensor& x, Shape shape);

/// Normalizes each (sample, group) slab to zero mean and unit variance. No affine terms.
Tensor group_norm(const Tensor& x, int groups, float eps = 1e-5f);

/// Scalar mean over all elements.
Tensor mean_all(const Tensor& x);
/// Scalar mean absolute difference.
Tensor l1_loss(const Tensor& output, const Tensor& reference);
/// Scalar sum of a list of scalars with per-term weights.
Tensor weighted_sum(const std::vector<Tensor>& terms, const std::vector<float>& weights);

}  // namespace crabsurvey::nn
