#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "rosita/random.hpp"
#include "rosita/tensor.hpp"

// Graph-building free functions. Each op produces a value eagerly and, when
// gradients are enabled and some input requires them, records a closure that
// scatters the output gradient back to its parents. Closures accumulate with
// += so a tensor used twice collects the sum of both paths.

namespace rosita {

namespace detail {

template <class Scalar>
Tensor<Scalar> make_op(const char* op, MatrixX<Scalar> value, Shape shape,
                       std::vector<typename Tensor<Scalar>::NodePtr> parents,
                       std::function<void(typename Tensor<Scalar>::Node&)> backprop) {
  using Node = typename Tensor<Scalar>::Node;
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->shape = std::move(shape);
  n->op = op;
  bool needs = false;
  if (grad_enabled_flag()) {
    for (const auto& p : parents)
      if (p->requires_grad) needs = true;
  }
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return Tensor<Scalar>(std::move(n));
}

template <class Scalar>
void check_same_dims(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(op) + ": dimension mismatch " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise arithmetic

template <class Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::check_same_dims(a, b, "add");
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>(
      "add", a.value() + b.value(), a.shape(), {a.node(), b.node()}, [](Node& n) {
        for (int i = 0; i < 2; ++i)
          if (n.parents[i]->requires_grad) {
            n.parents[i]->ensure_grad();
            n.parents[i]->grad += n.grad;
          }
      });
}

template <class Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::check_same_dims(a, b, "sub");
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>(
      "sub", a.value() - b.value(), a.shape(), {a.node(), b.node()}, [](Node& n) {
        if (n.parents[0]->requires_grad) {
          n.parents[0]->ensure_grad();
          n.parents[0]->grad += n.grad;
        }
        if (n.parents[1]->requires_grad) {
          n.parents[1]->ensure_grad();
          n.parents[1]->grad -= n.grad;
        }
      });
}

template <class Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::check_same_dims(a, b, "mul");
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>(
      "mul", a.value().cwiseProduct(b.value()), a.shape(), {a.node(), b.node()},
      [](Node& n) {
        if (n.parents[0]->requires_grad) {
          n.parents[0]->ensure_grad();
          n.parents[0]->grad += n.grad.cwiseProduct(n.parents[1]->value);
        }
        if (n.parents[1]->requires_grad) {
          n.parents[1]->ensure_grad();
          n.parents[1]->grad += n.grad.cwiseProduct(n.parents[0]->value);
        }
      });
}

template <class Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar c) {
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>("scale", a.value() * c, a.shape(), {a.node()},
                                 [c](Node& n) {
                                   n.parents[0]->ensure_grad();
                                   n.parents[0]->grad += n.grad * c;
                                 });
}

template <class Scalar>
Tensor<Scalar> neg(const Tensor<Scalar>& a) {
  return scale(a, Scalar(-1));
}

// b has one row, broadcast over the rows of a.
template <class Scalar>
Tensor<Scalar> add_rowvec(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require(b.rows() == 1 && b.cols() == a.cols(),
          "add_rowvec: expected 1x" + std::to_string(a.cols()) + " row vector");
  using Node = typename Tensor<Scalar>::Node;
  MatrixX<Scalar> out = a.value().rowwise() + b.value().row(0);
  return detail::make_op<Scalar>("add_rowvec", std::move(out), a.shape(),
                                 {a.node(), b.node()}, [](Node& n) {
                                   if (n.parents[0]->requires_grad) {
                                     n.parents[0]->ensure_grad();
                                     n.parents[0]->grad += n.grad;
                                   }
                                   if (n.parents[1]->requires_grad) {
                                     n.parents[1]->ensure_grad();
                                     n.parents[1]->grad.row(0) += n.grad.colwise().sum();
                                   }
                                 });
}

// b has one column, broadcast over the columns of a.
template <class Scalar>
Tensor<Scalar> add_colvec(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require(b.cols() == 1 && b.rows() == a.rows(),
          "add_colvec: expected " + std::to_string(a.rows()) + "x1 column vector");
  using Node = typename Tensor<Scalar>::Node;
  MatrixX<Scalar> out = a.value().colwise() + b.value().col(0);
  return detail::make_op<Scalar>("add_colvec", std::move(out), a.shape(),
                                 {a.node(), b.node()}, [](Node& n) {
                                   if (n.parents[0]->requires_grad) {
                                     n.parents[0]->ensure_grad();
                                     n.parents[0]->grad += n.grad;
                                   }
                                   if (n.parents[1]->requires_grad) {
                                     n.parents[1]->ensure_grad();
                                     n.parents[1]->grad.col(0) += n.grad.rowwise().sum();
                                   }
                                 });
}

// m has one column, scales each row of a.
template <class Scalar>
Tensor<Scalar> mul_colvec(const Tensor<Scalar>& a, const Tensor<Scalar>& m) {
  require(m.cols() == 1 && m.rows() == a.rows(), "mul_colvec: shape mismatch");
  using Node = typename Tensor<Scalar>::Node;
  MatrixX<Scalar> out = a.value().array().colwise() * m.value().col(0).array();
  return detail::make_op<Scalar>(
      "mul_colvec", std::move(out), a.shape(), {a.node(), m.node()}, [](Node& n) {
        if (n.parents[0]->requires_grad) {
          n.parents[0]->ensure_grad();
          n.parents[0]->grad.array() +=
              n.grad.array().colwise() * n.parents[1]->value.col(0).array();
        }
        if (n.parents[1]->requires_grad) {
          n.parents[1]->ensure_grad();
          n.parents[1]->grad.col(0) +=
              n.grad.cwiseProduct(n.parents[0]->value).rowwise().sum();
        }
      });
}

// s is a single-element tensor scaling everything.
template <class Scalar>
Tensor<Scalar> mul_scalar(const Tensor<Scalar>& a, const Tensor<Scalar>& s) {
  require(s.size() == 1, "mul_scalar: scale must be a single-element tensor");
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>(
      "mul_scalar", a.value() * s.value()(0, 0), a.shape(), {a.node(), s.node()},
      [](Node& n) {
        if (n.parents[0]->requires_grad) {
          n.parents[0]->ensure_grad();
          n.parents[0]->grad += n.grad * n.parents[1]->value(0, 0);
        }
        if (n.parents[1]->requires_grad) {
          n.parents[1]->ensure_grad();
          n.parents[1]->grad(0, 0) += n.grad.cwiseProduct(n.parents[0]->value).sum();
        }
      });
}

template <class Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return add(a, b);
}
template <class Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return sub(a, b);
}
template <class Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return mul(a, b);
}

// ---------------------------------------------------------------------------
// linear algebra

template <class Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions disagree, " +
                                    shape_str(a.shape()) + " x " + shape_str(b.shape()));
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>(
      "matmul", a.value() * b.value(), Shape{a.rows(), b.cols()},
      {a.node(), b.node()}, [](Node& n) {
        if (n.parents[0]->requires_grad) {
          n.parents[0]->ensure_grad();
          n.parents[0]->grad.noalias() += n.grad * n.parents[1]->value.transpose();
        }
        if (n.parents[1]->requires_grad) {
          n.parents[1]->ensure_grad();
          n.parents[1]->grad.noalias() += n.parents[0]->value.transpose() * n.grad;
        }
      });
}

template <class Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>("transpose", a.value().transpose(),
                                 Shape{a.cols(), a.rows()}, {a.node()}, [](Node& n) {
                                   n.parents[0]->ensure_grad();
                                   n.parents[0]->grad += n.grad.transpose();
                                 });
}

// ---------------------------------------------------------------------------
// structure: concat / slice / gather / reshape

template <class Scalar>
Tensor<Scalar> concat_rows(const std::vector<Tensor<Scalar>>& parts) {
  require(!parts.empty(), "concat_rows: empty input");
  Index cols = parts[0].cols(), rows = 0;
  for (const auto& p : parts) {
    require(p.cols() == cols, "concat_rows: column counts disagree");
    rows += p.rows();
  }
  MatrixX<Scalar> out(rows, cols);
  std::vector<typename Tensor<Scalar>::NodePtr> parents;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    parents.push_back(p.node());
    at += p.rows();
  }
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>("concat_rows", std::move(out), Shape{rows, cols},
                                 std::move(parents), [](Node& n) {
                                   Index at = 0;
                                   for (auto& p : n.parents) {
                                     if (p->requires_grad) {
                                       p->ensure_grad();
                                       p->grad += n.grad.middleRows(at, p->value.rows());
                                     }
                                     at += p->value.rows();
                                   }
                                 });
}

template <class Scalar>
Tensor<Scalar> concat_cols(const std::vector<Tensor<Scalar>>& parts) {
  require(!parts.empty(), "concat_cols: empty input");
  Index rows = parts[0].rows(), cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols: row counts disagree");
    cols += p.cols();
  }
  MatrixX<Scalar> out(rows, cols);
  std::vector<typename Tensor<Scalar>::NodePtr> parents;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    parents.push_back(p.node());
    at += p.cols();
  }
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>("concat_cols", std::move(out), Shape{rows, cols},
                                 std::move(parents), [](Node& n) {
                                   Index at = 0;
                                   for (auto& p : n.parents) {
                                     if (p->requires_grad) {
                                       p->ensure_grad();
                                       p->grad += n.grad.middleCols(at, p->value.cols());
                                     }
                                     at += p->value.cols();
                                   }
                                 });
}

template <class Scalar>
Tensor<Scalar> slice_rows(const Tensor<Scalar>& a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(),
          "slice_rows: range out of bounds");
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>("slice_rows", a.value().middleRows(start, count),
                                 Shape{count, a.cols()}, {a.node()},
                                 [start, count](Node& n) {
                                   n.parents[0]->ensure_grad();
                                   n.parents[0]->grad.middleRows(start, count) += n.grad;
                                 });
}

template <class Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(),
          "slice_cols: range out of bounds");
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>("slice_cols", a.value().middleCols(start, count),
                                 Shape{a.rows(), count}, {a.node()},
                                 [start, count](Node& n) {
                                   n.parents[0]->ensure_grad();
                                   n.parents[0]->grad.middleCols(start, count) += n.grad;
                                 });
}

// Rows of a picked by index; duplicate indices scatter-add on backward.
template <class Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& a, std::vector<Index> ids) {
  for (Index id : ids)
    require(id >= 0 && id < a.rows(), "gather_rows: index out of range");
  MatrixX<Scalar> out(static_cast<Index>(ids.size()), a.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Index>(i)) = a.value().row(ids[i]);
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>(
      "gather_rows", std::move(out), Shape{static_cast<Index>(ids.size()), a.cols()},
      {a.node()}, [ids = std::move(ids)](Node& n) {
        n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i)
          n.parents[0]->grad.row(ids[i]) += n.grad.row(static_cast<Index>(i));
      });
}

// Row-major reinterpretation; total size is preserved.
template <class Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape) {
  require(shape_size(shape) == a.size(), "reshape: size mismatch");
  Index r = Tensor<Scalar>::shape_rows(shape);
  Index c = Tensor<Scalar>::shape_cols(shape);
  MatrixX<Scalar> out = Eigen::Map<const MatrixX<Scalar>>(a.value().data(), r, c);
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>(
      "reshape", std::move(out), std::move(shape), {a.node()}, [](Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        p.grad += Eigen::Map<const MatrixX<Scalar>>(n.grad.data(), p.value.rows(),
                                                    p.value.cols());
      });
}

template <class Scalar>
Tensor<Scalar> pick(const Tensor<Scalar>& a, Index i, Index j) {
  require(i >= 0 && i < a.rows() && j >= 0 && j < a.cols(), "pick: out of range");
  using Node = typename Tensor<Scalar>::Node;
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = a.value()(i, j);
  return detail::make_op<Scalar>("pick", std::move(out), Shape{}, {a.node()},
                                 [i, j](Node& n) {
                                   n.parents[0]->ensure_grad();
                                   n.parents[0]->grad(i, j) += n.grad(0, 0);
                                 });
}

// ---------------------------------------------------------------------------
// nonlinearities

template <class Scalar>
Tensor<Scalar> tanh_t(const Tensor<Scalar>& a) {
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>(
      "tanh", a.value().array().tanh().matrix(), a.shape(), {a.node()}, [](Node& n) {
        n.parents[0]->ensure_grad();
        n.parents[0]->grad.array() +=
            n.grad.array() * (Scalar(1) - n.value.array().square());
      });
}

template <class Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& a) {
  using Node = typename Tensor<Scalar>::Node;
  MatrixX<Scalar> out =
      (Scalar(1) / (Scalar(1) + (-a.value().array()).exp())).matrix();
  return detail::make_op<Scalar>(
      "sigmoid", std::move(out), a.shape(), {a.node()}, [](Node& n) {
        n.parents[0]->ensure_grad();
        n.parents[0]->grad.array() +=
            n.grad.array() * n.value.array() * (Scalar(1) - n.value.array());
      });
}

template <class Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>(
      "relu", a.value().cwiseMax(Scalar(0)), a.shape(), {a.node()}, [](Node& n) {
        n.parents[0]->ensure_grad();
        n.parents[0]->grad.array() +=
            n.grad.array() * (n.parents[0]->value.array() > Scalar(0)).template cast<Scalar>();
      });
}

template <class Scalar>
Tensor<Scalar> exp_t(const Tensor<Scalar>& a) {
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>("exp", a.value().array().exp().matrix(), a.shape(),
                                 {a.node()}, [](Node& n) {
                                   n.parents[0]->ensure_grad();
                                   n.parents[0]->grad.array() +=
                                       n.grad.array() * n.value.array();
                                 });
}

template <class Scalar>
Tensor<Scalar> log_t(const Tensor<Scalar>& a) {
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>("log", a.value().array().log().matrix(), a.shape(),
                                 {a.node()}, [](Node& n) {
                                   n.parents[0]->ensure_grad();
                                   n.parents[0]->grad.array() +=
                                       n.grad.array() / n.parents[0]->value.array();
                                 });
}

// ---------------------------------------------------------------------------
// reductions and softmax family

template <class Scalar>
Tensor<Scalar> sum_all(const Tensor<Scalar>& a) {
  using Node = typename Tensor<Scalar>::Node;
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return detail::make_op<Scalar>("sum_all", std::move(out), Shape{}, {a.node()},
                                 [](Node& n) {
                                   n.parents[0]->ensure_grad();
                                   n.parents[0]->grad.array() += n.grad(0, 0);
                                 });
}

template <class Scalar>
Tensor<Scalar> mean_all(const Tensor<Scalar>& a) {
  using Node = typename Tensor<Scalar>::Node;
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = a.value().mean();
  const Scalar inv = Scalar(1) / static_cast<Scalar>(a.size());
  return detail::make_op<Scalar>("mean_all", std::move(out), Shape{}, {a.node()},
                                 [inv](Node& n) {
                                   n.parents[0]->ensure_grad();
                                   n.parents[0]->grad.array() += n.grad(0, 0) * inv;
                                 });
}

// Sum over each row -> column vector of shape {rows}.
template <class Scalar>
Tensor<Scalar> row_sum(const Tensor<Scalar>& a) {
  using Node = typename Tensor<Scalar>::Node;
  MatrixX<Scalar> out = a.value().rowwise().sum();
  return detail::make_op<Scalar>("row_sum", std::move(out), Shape{a.rows()},
                                 {a.node()}, [](Node& n) {
                                   n.parents[0]->ensure_grad();
                                   n.parents[0]->grad.colwise() += n.grad.col(0);
                                 });
}

namespace detail {
template <class Scalar>
MatrixX<Scalar> stable_softmax_rows(const MatrixX<Scalar>& x) {
  MatrixX<Scalar> out = x;
  for (Index i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    Scalar m = row.maxCoeff();
    row = (row.array() - m).exp();
    row /= row.sum();
  }
  return out;
}
}  // namespace detail

template <class Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& a) {
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>(
      "softmax_rows", detail::stable_softmax_rows(a.value()), a.shape(), {a.node()},
      [](Node& n) {
        n.parents[0]->ensure_grad();
        for (Index i = 0; i < n.value.rows(); ++i) {
          auto y = n.value.row(i).array();
          auto g = n.grad.row(i).array();
          Scalar dot = (g * y).sum();
          n.parents[0]->grad.row(i).array() += y * (g - dot);
        }
      });
}

template <class Scalar>
Tensor<Scalar> log_softmax_rows(const Tensor<Scalar>& a) {
  using Node = typename Tensor<Scalar>::Node;
  MatrixX<Scalar> out = a.value();
  for (Index i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    Scalar m = row.maxCoeff();
    Scalar lse = m + std::log((row.array() - m).exp().sum());
    row.array() -= lse;
  }
  return detail::make_op<Scalar>(
      "log_softmax_rows", std::move(out), a.shape(), {a.node()}, [](Node& n) {
        n.parents[0]->ensure_grad();
        for (Index i = 0; i < n.value.rows(); ++i) {
          auto g = n.grad.row(i).array();
          Scalar gsum = g.sum();
          n.parents[0]->grad.row(i).array() += g - n.value.row(i).array().exp() * gsum;
        }
      });
}

// Log-sum-exp over each row -> column vector of shape {rows}.
template <class Scalar>
Tensor<Scalar> logsumexp_rows(const Tensor<Scalar>& a) {
  using Node = typename Tensor<Scalar>::Node;
  MatrixX<Scalar> out(a.rows(), 1);
  for (Index i = 0; i < a.rows(); ++i) {
    auto row = a.value().row(i);
    Scalar m = row.maxCoeff();
    out(i, 0) = m + std::log((row.array() - m).exp().sum());
  }
  return detail::make_op<Scalar>(
      "logsumexp_rows", std::move(out), Shape{a.rows()}, {a.node()}, [](Node& n) {
        n.parents[0]->ensure_grad();
        for (Index i = 0; i < n.parents[0]->value.rows(); ++i) {
          auto row = n.parents[0]->value.row(i).array();
          n.parents[0]->grad.row(i).array() +=
              n.grad(i, 0) * (row - n.value(i, 0)).exp();
        }
      });
}

// Max over groups of `group` consecutive rows, per column. rows % group == 0.
template <class Scalar>
Tensor<Scalar> group_col_max(const Tensor<Scalar>& a, Index group) {
  require(group > 0 && a.rows() % group == 0,
          "group_col_max: rows must divide evenly into groups");
  const Index groups = a.rows() / group;
  MatrixX<Scalar> out(groups, a.cols());
  std::vector<Index> arg(static_cast<std::size_t>(groups * a.cols()));
  for (Index g = 0; g < groups; ++g) {
    for (Index c = 0; c < a.cols(); ++c) {
      Index best = 0;
      Scalar bv = a.value()(g * group, c);
      for (Index r = 1; r < group; ++r) {
        Scalar v = a.value()(g * group + r, c);
        if (v > bv) {
          bv = v;
          best = r;
        }
      }
      out(g, c) = bv;
      arg[static_cast<std::size_t>(g * a.cols() + c)] = g * group + best;
    }
  }
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>(
      "group_col_max", std::move(out), Shape{groups, a.cols()}, {a.node()},
      [arg = std::move(arg), group](Node& n) {
        n.parents[0]->ensure_grad();
        for (Index g = 0; g < n.value.rows(); ++g)
          for (Index c = 0; c < n.value.cols(); ++c)
            n.parents[0]->grad(arg[static_cast<std::size_t>(g * n.value.cols() + c)], c) +=
                n.grad(g, c);
      });
}

template <class Scalar>
Tensor<Scalar> col_max(const Tensor<Scalar>& a) {
  return group_col_max(a, a.rows());
}

// Per-row softmax cross-entropy against integer targets -> shape {rows}.
// Gradient of row i is softmax(row i) - onehot(target i), scaled by upstream.
template <class Scalar>
Tensor<Scalar> cross_entropy_rows(const Tensor<Scalar>& logits,
                                  std::vector<Index> targets) {
  require(static_cast<Index>(targets.size()) == logits.rows(),
          "cross_entropy_rows: one target per row required");
  for (Index t : targets)
    require(t >= 0 && t < logits.cols(), "cross_entropy_rows: target out of range");
  MatrixX<Scalar> out(logits.rows(), 1);
  for (Index i = 0; i < logits.rows(); ++i) {
    auto row = logits.value().row(i);
    Scalar m = row.maxCoeff();
    Scalar lse = m + std::log((row.array() - m).exp().sum());
    out(i, 0) = lse - row(targets[static_cast<std::size_t>(i)]);
  }
  using Node = typename Tensor<Scalar>::Node;
  return detail::make_op<Scalar>(
      "cross_entropy_rows", std::move(out), Shape{logits.rows()}, {logits.node()},
      [targets = std::move(targets)](Node& n) {
        n.parents[0]->ensure_grad();
        for (Index i = 0; i < n.parents[0]->value.rows(); ++i) {
          auto row = n.parents[0]->value.row(i);
          Scalar m = row.maxCoeff();
          VectorX<Scalar> p = (row.array() - m).exp();
          p /= p.sum();
          p(targets[static_cast<std::size_t>(i)]) -= Scalar(1);
          n.parents[0]->grad.row(i) += n.grad(i, 0) * p.transpose();
        }
      });
}

// ---------------------------------------------------------------------------
// dropout

// Inverted dropout: at train time keep with probability 1-p and scale kept
// units by 1/(1-p); identity at eval time.
template <class Scalar>
Tensor<Scalar> dropout(const Tensor<Scalar>& a, double p, bool train, Rng& rng) {
  if (!train || p <= 0.0) return a;
  require(p < 1.0, "dropout: rate must be < 1");
  MatrixX<Scalar> mask(a.rows(), a.cols());
  const Scalar keep_scale = Scalar(1.0 / (1.0 - p));
  for (Index i = 0; i < mask.rows(); ++i)
    for (Index j = 0; j < mask.cols(); ++j)
      mask(i, j) = rng.uniform() < p ? Scalar(0) : keep_scale;
  return mul(a, Tensor<Scalar>::from_matrix(std::move(mask)));
}

// Per-row mask shared across a sequence (sampled once by the caller).
template <class Scalar>
MatrixX<Scalar> dropout_mask(Index rows, Index cols, double p, Rng& rng) {
  MatrixX<Scalar> mask(rows, cols);
  const Scalar keep_scale = Scalar(1.0 / (1.0 - p));
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      mask(i, j) = rng.uniform() < p ? Scalar(0) : keep_scale;
  return mask;
}

}  // namespace rosita
