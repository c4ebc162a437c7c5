// Copyright (c) 2026 the stgnet authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with define-by-run reverse-mode differentiation.
// Every op records its parents and a backward closure on the output node;
// backward() replays closures in reverse creation order, which is a valid
// topological order because operands always exist before their result.
// All math is double precision; backward passes are deterministic
// (bit-identical) for a fixed graph regardless of worker-thread count.

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "stg/common.hpp"

namespace stg {

using Shape = std::vector<size_t>;

inline size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (size_t d : s) {
    STG_CHECK(d > 0, "tensor dims must be positive");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily on first accumulation
    bool requires_grad = false;
    std::uint64_t serial = 0;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad, accumulates into parents' grad. Captures raw Node
    // pointers; ownership is held by the parents vector, and the closure
    // never points at its own node, so the graph stays acyclic.
    std::function<void()> backward;
  };

  Tensor() = default;

  static Tensor zeros(Shape shape) {
    return from_data(std::move(shape), {});
  }

  static Tensor from_data(Shape shape, std::vector<double> data) {
    auto n = std::make_shared<Node>();
    const size_t count = shape_numel(shape);
    n->shape = std::move(shape);
    if (data.empty()) data.assign(count, 0.0);
    STG_CHECK(data.size() == count, "from_data: size does not match shape");
    n->value = std::move(data);
    n->serial = next_serial();
    return Tensor(std::move(n));
  }

  static Tensor scalar(double v) { return from_data({1}, {v}); }

  // Internal: op results.
  static Tensor make_result(Shape shape, std::vector<double> value,
                            std::vector<std::shared_ptr<Node>> parents) {
    auto n = std::make_shared<Node>();
    STG_CHECK(value.size() == shape_numel(shape), "result size/shape mismatch");
    n->shape = std::move(shape);
    n->value = std::move(value);
    for (auto& p : parents)
      if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->parents = std::move(parents);
    n->serial = next_serial();
    return Tensor(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  size_t rank() const { return node_->shape.size(); }
  size_t numel() const { return node_->value.size(); }
  size_t dim(size_t i) const { return node_->shape.at(i); }

  std::vector<double>& data() { return node_->value; }
  const std::vector<double>& data() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    node_->requires_grad = v;
    return *this;
  }

  // Gradient buffer; zeros until backward has accumulated into it.
  std::vector<double>& grad() {
    ensure_grad(node_.get());
    return node_->grad;
  }

  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  double item() const {
    STG_CHECK(numel() == 1, "item: tensor has " + std::to_string(numel()) + " elements");
    return node_->value[0];
  }

  double at(std::initializer_list<size_t> idx) const {
    return node_->value[flat_index(idx)];
  }

  size_t flat_index(std::initializer_list<size_t> idx) const {
    STG_CHECK(idx.size() == rank(), "at: index rank mismatch");
    size_t flat = 0, i = 0;
    for (size_t v : idx) {
      STG_CHECK(v < node_->shape[i], "at: index out of range");
      flat = flat * node_->shape[i] + v;
      ++i;
    }
    return flat;
  }

  // Reverse-mode sweep from a scalar. Collects the reachable subgraph that
  // participates in differentiation, seeds d(loss)/d(loss) = 1, and runs
  // closures in descending creation order.
  void backward() const {
    STG_CHECK(numel() == 1, "backward: loss must be a scalar");
    STG_CHECK(node_->requires_grad, "backward: loss does not require grad");
    std::vector<Node*> order;
    collect(node_.get(), order);
    std::sort(order.begin(), order.end(),
              [](const Node* a, const Node* b) { return a->serial > b->serial; });
    ensure_grad(node_.get());
    node_->grad[0] += 1.0;
    for (Node* n : order) {
      if (!n->backward) continue;
      if (n->grad.empty()) continue;  // no contribution flowed into this node
      n->backward();
    }
  }

  static void ensure_grad(Node* n) {
    if (n->grad.empty()) n->grad.assign(n->value.size(), 0.0);
  }

  std::shared_ptr<Node> node() const { return node_; }
  Node* raw() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static std::uint64_t next_serial() {
    thread_local std::uint64_t counter = 0;
    return ++counter;
  }

  static void collect(Node* root, std::vector<Node*>& out) {
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root};
    seen.insert(root);
    while (!stack.empty()) {
      Node* n = stack.back();
      stack.pop_back();
      out.push_back(n);
      for (auto& p : n->parents) {
        if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
      }
    }
  }

  std::shared_ptr<Node> node_;
};

// Non-differentiating helpers used by evaluation code.

inline size_t argmax_span(const double* v, size_t n) {
  size_t best = 0;
  for (size_t i = 1; i < n; ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// Argmax over the last axis for one "row" of a rank-2 tensor.
inline size_t argmax_row(const Tensor& t, size_t row) {
  STG_CHECK(t.rank() == 2, "argmax_row: want rank-2");
  const size_t cols = t.shape()[1];
  return argmax_span(t.data().data() + row * cols, cols);
}

}  // namespace stg
