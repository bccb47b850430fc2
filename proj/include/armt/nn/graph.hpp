#pragma once

// Tape-based reverse-mode differentiation over Tensor values.
//
// A Graph records every op result together with a closure that pushes the
// result's gradient into its inputs. Nodes are appended in topological order,
// so backward() is a single reverse sweep. Parameters enter the graph once
// each; their node gradients are added into Parameter::grad when backward()
// finishes.

#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "armt/nn/tensor.hpp"

namespace armt::nn {

template <typename T>
class Graph;

/// Handle to a node of a Graph.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  bool valid() const { return graph != nullptr; }
  const Tensor<T>& value() const { return graph->value(*this); }
  const Shape& shape() const { return graph->value(*this).shape(); }
};

/// Values that stop gradients, recorded during one evaluation and replayed in
/// later ones so finite-difference probes hold them fixed.
template <typename T>
struct DetachTape {
  std::vector<Tensor<T>> values;
  std::size_t cursor = 0;
  bool replay = false;
};

template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(const Tensor<T>& out_grad)>;

  /// With grad disabled nothing is retained for backward; used for inference.
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, nullptr, nullptr); }

  /// Leaf bound to `p`. Repeated calls with the same parameter return the same node.
  Var<T> param(Parameter<T>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var<T>{this, it->second};
    Var<T> v = push(p.value, grad_enabled_, nullptr, &p);
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  /// Appends an op result. The node requires grad if any input does.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward) {
    return record(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  Var<T> record(Tensor<T> value, std::span<const Var<T>> inputs, BackwardFn backward) {
    bool needs = false;
    if (grad_enabled_) {
      for (const Var<T>& in : inputs) needs = needs || requires_grad(in);
    }
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr, nullptr);
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_[v.id]->value; }
  bool requires_grad(Var<T> v) const { return nodes_[v.id]->requires_grad; }

  /// Gradient buffer of `v`, zero-allocated on first access.
  Tensor<T>& grad(Var<T> v) {
    Node& n = *nodes_[v.id];
    if (n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  bool has_grad(Var<T> v) const { return !nodes_[v.id]->grad.empty(); }

  /// Reverse sweep from a scalar node.
  void backward(Var<T> loss) {
    if (value(loss).size() != 1) throw ConfigError("backward() requires a scalar loss");
    if (!requires_grad(loss)) return;
    grad(loss)[0] = T(1);
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      Node& n = *nodes_[id];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(n.grad);
    }
    for (auto& [param, id] : param_nodes_) {
      const Node& n = *nodes_[id];
      if (n.grad.empty()) continue;
      if (!n.grad.all_finite()) throw NumericError("non-finite gradient for parameter " + param->name);
      T* dst = param->grad.ptr();
      const T* src = n.grad.ptr();
      for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += src[i];
    }
  }

  std::size_t size() const { return nodes_.size(); }

  void set_detach_tape(DetachTape<T>* tape) { detach_tape_ = tape; }

  /// Passes a stop-gradient value through the detach tape, if one is attached.
  Tensor<T> stop_gradient(Tensor<T> value) {
    if (!detach_tape_) return value;
    if (detach_tape_->replay) {
      if (detach_tape_->cursor >= detach_tape_->values.size()) {
        throw ConfigError("detach tape exhausted: evaluation is not repeatable");
      }
      const Tensor<T>& frozen = detach_tape_->values[detach_tape_->cursor++];
      if (frozen.shape() != value.shape()) throw ConfigError("detach tape shape mismatch");
      return frozen;
    }
    detach_tape_->values.push_back(value);
    return value;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  Var<T> push(Tensor<T> value, bool requires_grad, BackwardFn backward, Parameter<T>* param) {
    auto node = std::make_unique<Node>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    node->backward = std::move(backward);
    node->param = param;
    nodes_.push_back(std::move(node));
    return Var<T>{this, nodes_.size() - 1};
  }

  bool grad_enabled_;
  DetachTape<T>* detach_tape_ = nullptr;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::unordered_map<Parameter<T>*, std::size_t> param_nodes_;
};

}  // namespace armt::nn
