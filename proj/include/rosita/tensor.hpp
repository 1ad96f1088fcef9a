#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rosita/types.hpp"

namespace rosita {

// Thread-local switch: when off, new ops record no graph structure.
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}

class NoGradGuard {
 public:
  NoGradGuard() : prev_(grad_enabled_flag()) { grad_enabled_flag() = false; }
  ~NoGradGuard() { grad_enabled_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Dense tensor participating in a reverse-mode graph. Storage is a row-major
// matrix with rows = shape[0] and cols = product of the remaining dims, so
// rank-2 data is directly a matrix and higher ranks keep a flat row-major
// layout behind the same view.
template <class Scalar>
class Tensor {
 public:
  struct Node {
    MatrixX<Scalar> value;
    MatrixX<Scalar> grad;  // empty until first accumulation
    Shape shape;
    bool requires_grad = false;
    const char* op = "";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    bool leaf() const { return parents.empty(); }
    void ensure_grad() {
      if (grad.size() == 0) grad = MatrixX<Scalar>::Zero(value.rows(), value.cols());
    }
  };
  using NodePtr = std::shared_ptr<Node>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Index shape_rows(const Shape& s) { return s.empty() ? 1 : s[0]; }
  static Index shape_cols(const Shape& s) {
    Index c = 1;
    for (std::size_t i = 1; i < s.size(); ++i) c *= s[i];
    return c;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->value = MatrixX<Scalar>::Zero(shape_rows(shape), shape_cols(shape));
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor constant(Shape shape, Scalar v) {
    Tensor t = zeros(std::move(shape));
    t.node_->value.setConstant(v);
    return t;
  }

  static Tensor scalar(Scalar v, bool requires_grad = false) {
    Tensor t = zeros({}, requires_grad);
    t.node_->value(0, 0) = v;
    return t;
  }

  static Tensor from_matrix(MatrixX<Scalar> m, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->shape = {m.rows(), m.cols()};
    n->value = std::move(m);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from_vector(const std::vector<Scalar>& v, Shape shape,
                            bool requires_grad = false) {
    require(static_cast<Index>(v.size()) == shape_size(shape),
            "tensor data length must equal product of shape");
    Tensor t = zeros(std::move(shape), requires_grad);
    std::copy(v.begin(), v.end(), t.node_->value.data());
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const NodePtr& node() const { return node_; }

  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }

  MatrixX<Scalar>& value() { return node_->value; }
  const MatrixX<Scalar>& value() const { return node_->value; }
  Scalar item() const {
    require(size() == 1, "item() requires a single-element tensor");
    return node_->value(0, 0);
  }

  bool has_grad() const { return node_->grad.size() != 0; }
  MatrixX<Scalar>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const MatrixX<Scalar>& grad() const {
    const_cast<Node*>(node_.get())->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (node_->grad.size() != 0) node_->grad.setZero();
  }
  void drop_grad() { node_->grad.resize(0, 0); }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    require(node_->leaf(), "requires_grad can only be toggled on leaf tensors");
    node_->requires_grad = on;
    return *this;
  }

  bool is_leaf() const { return node_->leaf(); }
  const char* op() const { return node_->op; }

 private:
  NodePtr node_;
};

namespace detail {

// Iterative topological order over the reachable grad-requiring subgraph;
// every node is visited exactly once.
template <class Scalar>
std::vector<typename Tensor<Scalar>::Node*> topo_order(
    typename Tensor<Scalar>::Node* root) {
  using Node = typename Tensor<Scalar>::Node;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // (node, next parent index to visit)
  std::vector<std::pair<Node*, std::size_t>> stack;
  if (root->requires_grad) {
    stack.emplace_back(root, 0);
    seen.insert(root);
  }
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* parent = node->parents[idx++].get();
      if (parent->requires_grad && !seen.count(parent)) {
        seen.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

}  // namespace detail

// Accumulates d(loss)/d(t) into the grad of every reachable tensor that
// requires one. Gradients sum into whatever is already stored; callers that
// want fresh gradients zero them first.
template <class Scalar>
void backward(const Tensor<Scalar>& loss) {
  require(loss.defined(), "backward: undefined tensor");
  require(loss.size() == 1, "backward: loss must be a scalar tensor, got shape " +
                                shape_str(loss.shape()));
  using Node = typename Tensor<Scalar>::Node;
  Node* root = loss.node().get();
  require(root->requires_grad,
          "backward: loss has no backprop graph (gradients disabled or no "
          "grad-requiring inputs)");

  auto order = detail::topo_order<Scalar>(root);
  root->ensure_grad();
  root->grad(0, 0) += Scalar(1);
  // children first
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop) node->backprop(*node);
  }
}

}  // namespace rosita
