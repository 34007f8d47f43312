// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace crabsurvey::nn {

/// NCHW extent. Every tensor in the engine is 4-D; scalars are {1,1,1,1}.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

struct Node;

/// Handle to a node of the reverse-mode autograd graph.
///
/// Copying a Tensor aliases the same storage. Values are float32. Gradients are
/// allocated lazily by `backward()`.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const { return shape().numel(); }

  std::span<float> data();
  std::span<const float> data() const;
  /// Empty until a backward pass reaches this node.
  std::span<float> grad();
  std::span<const float> grad() const;
  bool has_grad() const;
  void zero_grad();

  bool requires_grad() const;
  float item() const;

  /// Runs reverse-mode accumulation from this scalar.
  void backward() const;

  /// Same values, cut from the graph.
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  /// Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  std::vector<float>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
    return grad;
  }
};

/// True while gradient recording is enabled on this thread.
bool grad_enabled();

/// Disables graph recording for its lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Creates the result node of an op. When recording is enabled and any parent requires
/// a gradient, the node keeps its parents and backward closure.
Tensor make_result(Shape shape, std::vector<float> value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward_fn);

}  // namespace crabsurvey::nn
