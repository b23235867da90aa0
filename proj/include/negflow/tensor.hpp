#ifndef NEGFLOW_TENSOR_HPP
#define NEGFLOW_TENSOR_HPP

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "negflow/common.hpp"

namespace negflow {

/**
 * One node of the dynamic computation graph. Holds the forward value and,
 * when gradients are requested, the accumulated gradient plus a closure
 * that pushes this node's gradient into its parents.
 */
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

/**
 * Value-semantic handle to a graph node. Copies are cheap and alias the
 * same storage. All arithmetic lives in ops.hpp; this class only manages
 * storage, gradient buffers and the backward traversal.
 */
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
      : node_(std::make_shared<TensorNode>()) {
    node_->shape = std::move(shape);
    node_->value.assign(static_cast<std::size_t>(shape_numel(node_->shape)), fill);
    node_->requires_grad = requires_grad;
  }

  static Tensor from_values(Shape shape, std::vector<double> v, bool requires_grad = false) {
    if (static_cast<std::int64_t>(v.size()) != shape_numel(shape))
      throw ConfigError(format_msg("Tensor::from_values: ", v.size(), " values for shape ",
                                   shape_str(shape)));
    Tensor t;
    t.node_ = std::make_shared<TensorNode>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(v);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from_values(Shape{}, {v}, requires_grad);
  }

  /// Builds an op result. Parents and the backward closure are dropped when
  /// no parent requires a gradient, so evaluation-only code never builds a
  /// graph.
  static Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                        std::function<void(TensorNode&)> backward_fn) {
    Tensor t = from_values(std::move(shape), std::move(value));
    bool rg = false;
    for (const Tensor& p : parents) rg = rg || p.requires_grad();
    if (rg) {
      t.node_->requires_grad = true;
      t.node_->parents.reserve(parents.size());
      for (Tensor& p : parents) t.node_->parents.push_back(p.node_);
      t.node_->backward_fn = std::move(backward_fn);
    }
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Marks a leaf as trainable. Must not be called on op results.
  void set_requires_grad(bool rg) {
    if (rg && node_->backward_fn) throw ConfigError("set_requires_grad: not a leaf");
    node_->requires_grad = rg;
  }

  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& mutable_values() { return node_->value; }
  double operator[](std::int64_t i) const { return node_->value[static_cast<std::size_t>(i)]; }

  double item() const {
    if (numel() != 1) throw ConfigError(format_msg("item(): tensor has ", numel(), " elements"));
    return node_->value[0];
  }

  const std::vector<double>& grad() const { return node_->grad; }
  std::vector<double>& mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }

  void zero_grad() {
    if (node_) node_->grad.assign(node_->value.size(), 0.0);
  }

  std::shared_ptr<TensorNode> node() const { return node_; }

  /// Reverse-mode sweep from this (scalar) node. Gradients accumulate into
  /// every reachable node with requires_grad.
  void backward() {
    if (numel() != 1) throw ConfigError("backward(): root must be scalar");
    if (!node_->requires_grad) return;
    std::vector<TensorNode*> order = topo_order();
    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      TensorNode* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
  }

 private:
  std::vector<TensorNode*> topo_order() const {
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> done;
    // Iterative post-order DFS; frame.second is the next parent index.
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    std::unordered_set<TensorNode*> on_stack{node_.get()};
    while (!stack.empty()) {
      auto& [n, idx] = stack.back();
      if (idx < n->parents.size()) {
        TensorNode* p = n->parents[idx++].get();
        if (p->requires_grad && !done.count(p) && !on_stack.count(p)) {
          stack.emplace_back(p, 0);
          on_stack.insert(p);
        }
      } else {
        done.insert(n);
        on_stack.erase(n);
        order.push_back(n);
        stack.pop_back();
      }
    }
    return order;
  }

  std::shared_ptr<TensorNode> node_;
};

}  // namespace negflow

#endif  // NEGFLOW_TENSOR_HPP
