// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <algorithm>
#include <random>

#include "crabsurvey/nn/checkpoint.hpp"
#include "crabsurvey/nn/module.hpp"
#include "crabsurvey/nn/ops.hpp"
#include "crabsurvey/nn/optim.hpp"

namespace crabsurvey::nn {
namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, bool grad = true) {
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(s.numel());
  for (auto& x : v) x = d(rng);
  return Tensor::from(s, std::move(v), grad);
}

// Projects f's output onto a fixed random direction so the check covers every element.
float projected(const std::function<Tensor()>& f, const std::vector<float>& dir) {
  const Tensor out = f();
  double acc = 0.0;
  for (std::size_t i = 0; i < dir.size(); ++i) acc += dir[i] * out.data()[i];
  return static_cast<float>(acc);
}

// Central finite differences in double-rounded float; tolerance is relative to scale.
void expect_gradients(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                      double tol = 2e-2) {
  std::mt19937_64 rng(99);
  const Tensor probe = f();
  std::vector<float> dir(probe.numel());
  std::normal_distribution<float> d(0.0f, 1.0f);
  for (auto& x : dir) x = d(rng);
  const Tensor dir_t = Tensor::from(probe.shape(), dir);
  for (auto& in : inputs) in.zero_grad();
  const Tensor out = f();
  mean_all(mul(out, dir_t)).backward();
  const float n = static_cast<float>(out.numel());
  for (auto& in : inputs) {
    ASSERT_TRUE(in.has_grad());
    for (std::size_t i = 0; i < in.numel(); ++i) {
      const float saved = in.data()[i];
      const float h = 1e-2f;
      in.data()[i] = saved + h;
      const float up = projected(f, dir);
      in.data()[i] = saved - h;
      const float down = projected(f, dir);
      in.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * h) / n;
      const double analytic = in.grad()[i];
      EXPECT_NEAR(analytic, numeric, tol * std::max(1.0, std::abs(numeric)) / n * 4)
          << "element " << i;
    }
  }
}

TEST(NnOps, Conv2dDenseGradient) {
  std::mt19937_64 rng(1);
  auto x = random_tensor({2, 4, 5, 6}, rng);
  auto w = random_tensor({3, 4, 3, 3}, rng);
  auto b = random_tensor({1, 3, 1, 1}, rng);
  expect_gradients([&] { return conv2d(x, w, b, {2, 1, 1, 1}); }, {x, w, b});
}

TEST(NnOps, Conv2dPointwiseAndGroupedGradient) {
  std::mt19937_64 rng(2);
  auto x = random_tensor({1, 4, 4, 4}, rng);
  auto w1 = random_tensor({6, 4, 1, 1}, rng);
  expect_gradients([&] { return conv2d(x, w1, Tensor{}, {1, 0, 0, 1}); }, {x, w1});
  auto wg = random_tensor({4, 2, 3, 3}, rng);
  expect_gradients([&] { return conv2d(x, wg, Tensor{}, {1, 1, 1, 2}); }, {x, wg});
  auto wd = random_tensor({4, 1, 3, 3}, rng);
  expect_gradients([&] { return conv2d(x, wd, Tensor{}, {2, 1, 1, 4}); }, {x, wd});
}

TEST(NnOps, RectangularKernelGradient) {
  std::mt19937_64 rng(3);
  auto x = random_tensor({2, 1, 7, 1}, rng);
  auto w = random_tensor({1, 1, 3, 1}, rng);
  const auto y = conv2d(x, w, Tensor{}, {1, 1, 0, 1});
  EXPECT_EQ(y.shape(), (Shape{2, 1, 7, 1}));
  expect_gradients([&] { return conv2d(x, w, Tensor{}, {1, 1, 0, 1}); }, {x, w});
}

TEST(NnOps, ConvTransposeGradientAndShape) {
  std::mt19937_64 rng(4);
  auto x = random_tensor({2, 4, 3, 3}, rng);
  auto w = random_tensor({4, 2, 4, 4}, rng);
  auto b = random_tensor({1, 2, 1, 1}, rng);
  const auto y = conv_transpose2d(x, w, b, {2, 1, 1, 1});
  EXPECT_EQ(y.shape(), (Shape{2, 2, 6, 6}));
  expect_gradients([&] { return conv_transpose2d(x, w, b, {2, 1, 1, 1}); }, {x, w, b});
  auto wd = random_tensor({4, 1, 3, 3}, rng);
  expect_gradients([&] { return conv_transpose2d(x, wd, Tensor{}, {1, 1, 1, 4}); }, {x, wd});
}

TEST(NnOps, ConvTransposeIsAdjointOfConv) {
  // <conv(x), y> == <x, convT(y)> for matching geometry.
  std::mt19937_64 rng(5);
  auto x = random_tensor({1, 3, 5, 5}, rng, false);
  auto w = random_tensor({2, 3, 3, 3}, rng, false);
  const ConvGeometry g{2, 1, 1, 1};
  const auto cx = conv2d(x, w, Tensor{}, g);
  auto y = random_tensor(cx.shape(), rng, false);
  // convT weight layout {Cin_of_T = 2, Cout_of_T = 3, k, k} equals conv weight layout.
  const auto ty = conv_transpose2d(y, w, Tensor{}, g);
  ASSERT_EQ(ty.shape().h, 5);  // (3-1)*2 - 2 + 3
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < cx.numel(); ++i) lhs += cx.data()[i] * y.data()[i];
  for (int c = 0; c < 3; ++c)
    for (int yy = 0; yy < 5; ++yy)
      for (int xx = 0; xx < 5; ++xx)
        rhs += x.data()[(c * 5 + yy) * 5 + xx] * ty.data()[(c * 5 + yy) * 5 + xx];
  EXPECT_NEAR(lhs, rhs, 1e-3);
}

TEST(NnOps, ElementwiseAndBroadcastGradients) {
  std::mt19937_64 rng(6);
  auto a = random_tensor({2, 3, 2, 2}, rng);
  auto b = random_tensor({2, 3, 1, 1}, rng);
  auto c = random_tensor({1, 3, 1, 1}, rng);
  expect_gradients([&] { return add(mul(a, sigmoid(b)), c); }, {a, b, c});
  expect_gradients([&] { return silu(a); }, {a});
  expect_gradients([&] { return scale(relu(a), 3.0f); }, {a});
}

TEST(NnOps, StructuralOpGradients) {
  std::mt19937_64 rng(7);
  auto a = random_tensor({2, 8, 3, 3}, rng);
  auto b = random_tensor({2, 2, 3, 3}, rng);
  expect_gradients([&] { return concat_channels({a, b, a}); }, {a, b});
  expect_gradients([&] { return slice_channels(a, 2, 3); }, {a});
  expect_gradients([&] { return channel_shuffle(a, 2); }, {a});
  expect_gradients([&] { return pixel_shuffle(a, 2); }, {a});
  expect_gradients([&] { return upsample_nearest(b, 2); }, {b});
  expect_gradients([&] { return global_avg_pool(a); }, {a});
  // Max pooling needs well-separated values so the finite-difference step keeps the argmax.
  std::vector<float> spaced(a.numel());
  for (std::size_t i = 0; i < spaced.size(); ++i) spaced[i] = 0.1f * static_cast<float>(i);
  std::shuffle(spaced.begin(), spaced.end(), rng);
  auto p = Tensor::from(a.shape(), spaced, true);
  expect_gradients([&] { return max_pool2d(p, 3, 1, 1); }, {p});
  expect_gradients([&] { return reshape(b, {2, 1, 18, 1}); }, {b});
  expect_gradients([&] { return group_norm(a, 4); }, {a}, 5e-2);
}

TEST(NnOps, PixelShuffleLayout) {
  std::vector<float> v(8);
  for (int i = 0; i < 8; ++i) v[i] = static_cast<float>(i);
  // channels 0..3 with one pixel each, two samples
  auto x = Tensor::from({2, 4, 1, 1}, v);
  auto y = pixel_shuffle(x, 2);
  ASSERT_EQ(y.shape(), (Shape{2, 1, 2, 2}));
  EXPECT_EQ(std::vector<float>(y.data().begin(), y.data().end()),
            (std::vector<float>{0, 1, 2, 3, 4, 5, 6, 7}));
}

TEST(NnOps, L1LossValuesAndGradient) {
  auto a = Tensor::from({1, 1, 1, 2}, {0.0f, 0.5f}, true);
  auto b = Tensor::from({1, 1, 1, 2}, {0.5f, 0.5f});
  auto loss = l1_loss(a, b);
  EXPECT_FLOAT_EQ(loss.item(), 0.25f);
  loss.backward();
  EXPECT_FLOAT_EQ(a.grad()[0], -0.5f);
  EXPECT_FLOAT_EQ(a.grad()[1], 0.0f);
}

TEST(NnOps, NoGradGuardSkipsGraph) {
  auto a = Tensor::full({1, 1, 2, 2}, 1.0f, true);
  NoGradGuard guard;
  auto b = relu(a);
  EXPECT_FALSE(b.requires_grad());
  EXPECT_TRUE(b.node()->parents.empty());
}

TEST(NnOps, ShapeErrorsThrow) {
  auto a = Tensor::zeros({1, 3, 4, 4});
  auto w = Tensor::zeros({2, 2, 3, 3});
  EXPECT_THROW(conv2d(a, w, Tensor{}, {}), std::invalid_argument);
  EXPECT_THROW(add(a, Tensor::zeros({1, 2, 1, 1})), std::invalid_argument);
  EXPECT_THROW(pixel_shuffle(a, 2), std::invalid_argument);
}

TEST(NnModule, ParameterRegistryAndCheckpointRoundTrip) {
  Rng rng(11);
  Conv2d conv(3, 5, 3, rng);
  EXPECT_EQ(conv.parameter_count(), 5u * 3 * 9 + 5);
  const auto names = conv.named_parameters();
  ASSERT_EQ(names.size(), 2u);
  EXPECT_EQ(names[0].first, "weight");

  const auto path = std::filesystem::temp_directory_path() / "crabsurvey_nn_ckpt.bin";
  write_checkpoint(snapshot(conv, "test", "abc", "k=v", 3, {1.5, 0.25}), path);
  Rng other(12);
  Conv2d conv2(3, 5, 3, other);
  const auto ckpt = read_checkpoint(path);
  EXPECT_EQ(ckpt.epoch, 3);
  EXPECT_EQ(ckpt.loss_history, (std::vector<double>{1.5, 0.25}));
  restore(conv2, ckpt);
  const auto w1 = conv.weight().data();
  const auto w2 = conv2.weight().data();
  EXPECT_TRUE(std::equal(w1.begin(), w1.end(), w2.begin()));
  std::filesystem::remove(path);
}

TEST(NnOptim, AdamReducesQuadratic) {
  auto w = Tensor::from({1, 1, 1, 2}, {3.0f, -2.0f}, true);
  Adam opt({w}, 0.1);
  const auto zero = Tensor::zeros({1, 1, 1, 2});
  float first = 0.0f, last = 0.0f;
  for (int i = 0; i < 200; ++i) {
    opt.zero_grad();
    auto loss = l1_loss(w, zero);
    if (i == 0) first = loss.item();
    last = loss.item();
    loss.backward();
    opt.step();
  }
  EXPECT_LT(last, 0.1f * first);
  EXPECT_DOUBLE_EQ(step_decay(1e-4, 250, 100), 0.25e-4);
}

}  // namespace
}  // namespace crabsurvey::nn
