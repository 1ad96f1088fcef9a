#pragma once

#include <cmath>
#include <string>
#include <unordered_map>

#include "rosita/params.hpp"
#include "rosita/tensor.hpp"

namespace rosita {

enum class OptKind { adagrad, adam, adadelta };

struct OptimizerConfig {
  OptKind kind = OptKind::adagrad;
  double lr = 0.1;
  double beta1 = 0.9;    // adam
  double beta2 = 0.999;  // adam
  double rho = 0.95;     // adadelta
  // Adagrad runs with epsilon 0: the initial accumulator already keeps the
  // denominator positive. Adam/Adadelta keep a conventional epsilon.
  double epsilon_adam = 1e-8;
  double epsilon_adadelta = 1e-6;
  double initial_accumulator = 1.0;  // adagrad
  double l2 = 0.0;                   // added to grads before clipping
  double clip = 0.0;                 // global-norm threshold; 0 disables

  static OptimizerConfig adagrad(double lr, double initial_accumulator = 1.0) {
    OptimizerConfig c;
    c.kind = OptKind::adagrad;
    c.lr = lr;
    c.initial_accumulator = initial_accumulator;
    return c;
  }
  static OptimizerConfig adam(double lr, double b1 = 0.9, double b2 = 0.999) {
    OptimizerConfig c;
    c.kind = OptKind::adam;
    c.lr = lr;
    c.beta1 = b1;
    c.beta2 = b2;
    return c;
  }
  static OptimizerConfig adadelta(double lr, double rho = 0.95) {
    OptimizerConfig c;
    c.kind = OptKind::adadelta;
    c.lr = lr;
    c.rho = rho;
    return c;
  }
};

// Rescales gradients so the global (all-parameter) L2 norm is at most
// `threshold`. Returns the norm before clipping.
template <class Scalar>
double clip_global_norm(ParamSet<Scalar>& params, double threshold) {
  double sq = 0;
  for (auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    sq += static_cast<double>(t.grad().squaredNorm());
  }
  const double norm = std::sqrt(sq);
  if (threshold > 0 && norm > threshold) {
    const Scalar s = static_cast<Scalar>(threshold / norm);
    for (auto& [name, t] : params)
      if (t.has_grad()) t.grad() *= s;
  }
  return norm;
}

template <class Scalar>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  const OptimizerConfig& config() const { return cfg_; }
  long step_count() const { return steps_; }

  // Applies one update from the gradients currently stored on `params`.
  // Parameters without a gradient are skipped. Gradients are consumed
  // (cleared) afterwards.
  void step(ParamSet<Scalar>& params) {
    for (auto& [name, t] : params) {
      if (!t.has_grad()) continue;
      require(t.grad().allFinite(), "optimizer: non-finite gradient in " + name);
      if (cfg_.l2 != 0) t.grad() += static_cast<Scalar>(cfg_.l2) * t.value();
    }
    if (cfg_.clip > 0) clip_global_norm(params, cfg_.clip);
    ++steps_;
    for (auto& [name, t] : params) {
      if (!t.has_grad()) continue;
      apply(name, t);
      t.drop_grad();
    }
  }

 private:
  struct Slot {
    MatrixX<Scalar> a;  // adagrad acc / adam m / adadelta E[g^2]
    MatrixX<Scalar> b;  // adam v / adadelta E[dx^2]
  };

  Slot& slot_for(const std::string& name, const Tensor<Scalar>& t) {
    auto it = state_.find(name);
    if (it == state_.end()) {
      Slot s;
      const Scalar init = cfg_.kind == OptKind::adagrad
                              ? static_cast<Scalar>(cfg_.initial_accumulator)
                              : Scalar(0);
      s.a = MatrixX<Scalar>::Constant(t.rows(), t.cols(), init);
      if (cfg_.kind != OptKind::adagrad)
        s.b = MatrixX<Scalar>::Zero(t.rows(), t.cols());
      it = state_.emplace(name, std::move(s)).first;
    }
    require(it->second.a.rows() == t.rows() && it->second.a.cols() == t.cols(),
            "optimizer: parameter " + name + " changed shape");
    return it->second;
  }

  void apply(const std::string& name, Tensor<Scalar>& t) {
    Slot& s = slot_for(name, t);
    const auto& g = t.grad();
    auto& p = t.value();
    const Scalar lr = static_cast<Scalar>(cfg_.lr);
    switch (cfg_.kind) {
      case OptKind::adagrad: {
        s.a.array() += g.array().square();
        p.array() -= lr * g.array() / s.a.array().sqrt();
        break;
      }
      case OptKind::adam: {
        const Scalar b1 = static_cast<Scalar>(cfg_.beta1);
        const Scalar b2 = static_cast<Scalar>(cfg_.beta2);
        const Scalar eps = static_cast<Scalar>(cfg_.epsilon_adam);
        s.a = b1 * s.a + (Scalar(1) - b1) * g;
        s.b.array() = b2 * s.b.array() + (Scalar(1) - b2) * g.array().square();
        const Scalar c1 = Scalar(1) - static_cast<Scalar>(std::pow(cfg_.beta1, steps_));
        const Scalar c2 = Scalar(1) - static_cast<Scalar>(std::pow(cfg_.beta2, steps_));
        p.array() -=
            lr * (s.a.array() / c1) / ((s.b.array() / c2).sqrt() + eps);
        break;
      }
      case OptKind::adadelta: {
        const Scalar rho = static_cast<Scalar>(cfg_.rho);
        const Scalar eps = static_cast<Scalar>(cfg_.epsilon_adadelta);
        s.a.array() = rho * s.a.array() + (Scalar(1) - rho) * g.array().square();
        MatrixX<Scalar> dx =
            -((s.b.array() + eps).sqrt() / (s.a.array() + eps).sqrt() * g.array())
                 .matrix();
        s.b.array() = rho * s.b.array() + (Scalar(1) - rho) * dx.array().square();
        p += lr * dx;
        break;
      }
    }
  }

  OptimizerConfig cfg_;
  long steps_ = 0;
  std::unordered_map<std::string, Slot> state_;
};

}  // namespace rosita
