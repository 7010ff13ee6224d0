// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "graphormer/errors.hpp"

namespace graphormer {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

inline std::atomic<std::uint64_t>& creation_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline std::atomic<bool>& debug_flag() {
  static std::atomic<bool> flag{[] {
    const char* env = std::getenv("GRAPHORMER_DEBUG_CHECKS");
    return env != nullptr && std::string(env) == "1";
  }()};
  return flag;
}

}  // namespace detail

/// Whether ops record backward rules on this thread.
inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables tape recording for its lifetime (evaluation, finite differences).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// NaN/Inf checking after every op. Off unless GRAPHORMER_DEBUG_CHECKS=1.
inline bool debug_checks() { return detail::debug_flag().load(std::memory_order_relaxed); }
inline void set_debug_checks(bool on) { detail::debug_flag().store(on); }

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t order = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;  // empty for leaves
  const char* op = "leaf";

  bool is_leaf() const { return !backward; }

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

/// Dense row-major array participating in reverse-mode differentiation.
/// Copies share the underlying node.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : Tensor(Shape{1}, std::vector<T>{T(0)}) {}

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
    for (auto e : shape)
      if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
    if (shape_size(shape) != values.size())
      throw DimensionError("shape " + shape_string(shape) + " does not match " +
                           std::to_string(values.size()) + " values");
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
    node_->order = detail::creation_counter().fetch_add(1, std::memory_order_relaxed);
  }

  static Tensor zeros(Shape shape) {
    auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)));
  }
  static Tensor filled(Shape shape, T v) {
    auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<T>(n, v));
  }
  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<T> values) {
    return Tensor(Shape{rows, cols}, std::move(values));
  }
  static Tensor identity(std::size_t n) {
    auto t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t.node_->value[i * n + i] = T(1);
    return t;
  }
  /// Trainable leaf.
  static Tensor parameter(Shape shape, std::vector<T> values) {
    return Tensor(std::move(shape), std::move(values), true);
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return ndim() == 1 ? 1 : node_->shape[0]; }
  std::size_t cols() const { return node_->shape.back(); }

  std::span<const T> values() const { return node_->value; }
  /// Mutable access; only for optimizer updates and initialization.
  std::span<T> mutable_values() { return node_->value; }
  std::vector<T> to_vector() const { return node_->value; }

  T item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
  }
  T operator[](std::size_t i) const { return node_->value[i]; }
  T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) {
    if (!node_->is_leaf()) throw ContractError("requires_grad can only be set on leaves");
    node_->requires_grad = on;
  }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient values; all zeros when nothing has been accumulated yet.
  std::vector<T> grad() const {
    if (node_->grad.empty()) return std::vector<T>(size(), T(0));
    return node_->grad;
  }
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  const char* op_name() const { return node_->op; }

  std::shared_ptr<Node<T>> node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  /// Fresh leaf holding a copy of the values (no history).
  Tensor detach() const { return Tensor(shape(), node_->value); }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
void check_finite(const Node<T>& n) {
  for (T v : n.value)
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value produced by op '") + n.op + "'");
}

}  // namespace detail

/// Builds an op output; backward is recorded only if grad mode is on and some
/// input requires gradients.
template <typename T>
Tensor<T> make_op(const char* name, Shape shape, std::vector<T> values,
                  std::initializer_list<Tensor<T>> inputs, std::function<void(Node<T>&)> backward) {
  Tensor<T> out(std::move(shape), std::move(values));
  auto node = out.node();
  node->op = name;
  if (debug_checks()) detail::check_finite(*node);
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  node->requires_grad = true;
  for (const auto& in : inputs) node->inputs.push_back(in.node());
  node->backward = std::move(backward);
  return out;
}

/// Ordered record of the ops reachable from a scalar loss, newest first.
/// Creation order is a topological order, so replaying it visits every op
/// after all of its consumers.
template <typename T>
class GradTape {
 public:
  explicit GradTape(const Tensor<T>& loss) : root_(loss.node()) {
    std::vector<Node<T>*> stack{root_.get()};
    std::unordered_set<Node<T>*> seen;
    while (!stack.empty()) {
      Node<T>* n = stack.back();
      stack.pop_back();
      if (!n->requires_grad || !seen.insert(n).second) continue;
      visited_.push_back(n);
      for (auto& in : n->inputs)
        if (in->requires_grad) stack.push_back(in.get());
    }
    std::sort(visited_.begin(), visited_.end(),
              [](const Node<T>* a, const Node<T>* b) { return a->order > b->order; });
  }

  std::size_t size() const { return visited_.size(); }
  const std::vector<Node<T>*>& nodes() const { return visited_; }

  void replay() {
    root_->grad_buffer()[0] += T(1);
    for (Node<T>* n : visited_) {
      if (n->backward && !n->grad.empty()) n->backward(*n);
    }
    for (Node<T>* n : visited_) {
      if (!n->is_leaf()) n->grad.clear();
    }
  }

 private:
  std::shared_ptr<Node<T>> root_;
  std::vector<Node<T>*> visited_;
};

/// Populates d(loss)/d(leaf) on every requires_grad leaf; accumulates.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1)
    throw ContractError("backward() requires a scalar loss, got shape " + shape_string(loss.shape()));
  if (!loss.requires_grad()) return;
  GradTape<T> tape(loss);
  tape.replay();
}

}  // namespace graphormer
