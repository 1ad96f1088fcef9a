#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "rosita/params.hpp"
#include "rosita/tensor.hpp"

namespace rosita {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0;
  Index row = 0, col = 0;  // worst element
  double analytic = 0, numeric = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0;
  bool pass(double tol = 1e-3) const { return max_rel_err < tol; }
  std::string describe() const {
    std::string s;
    for (const auto& e : entries)
      s += e.name + ": rel " + std::to_string(e.max_rel_err) + " at (" +
           std::to_string(e.row) + "," + std::to_string(e.col) + ") analytic " +
           std::to_string(e.analytic) + " numeric " + std::to_string(e.numeric) + "\n";
    return s;
  }
};

// Central-difference check of d loss / d param for every element of every
// listed parameter. `f` rebuilds the loss from the parameters' current values
// and must be deterministic (no dropout). Perturbations are applied in place
// and restored. High precision only: finite differences drown in float noise.
template <class F>
GradCheckReport grad_check(std::vector<std::pair<std::string, Tensor<double>>> params,
                           F&& f, double eps = 1e-4) {
  for (auto& [name, p] : params) p.drop_grad();
  {
    Tensor<double> loss = f();
    backward(loss);
  }
  std::vector<MatrixD> analytic;
  for (auto& [name, p] : params)
    analytic.push_back(p.has_grad() ? p.grad()
                                    : MatrixD::Zero(p.rows(), p.cols()));

  GradCheckReport report;
  NoGradGuard guard;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k].second;
    GradCheckEntry entry;
    entry.name = params[k].first;
    for (Index i = 0; i < p.rows(); ++i) {
      for (Index j = 0; j < p.cols(); ++j) {
        const double saved = p.value()(i, j);
        p.value()(i, j) = saved + eps;
        const double fp = f().item();
        p.value()(i, j) = saved - eps;
        const double fm = f().item();
        p.value()(i, j) = saved;
        const double numeric = (fp - fm) / (2 * eps);
        const double a = analytic[k](i, j);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
        const double rel = std::abs(a - numeric) / denom;
        if (rel > entry.max_rel_err) {
          entry.max_rel_err = rel;
          entry.row = i;
          entry.col = j;
          entry.analytic = a;
          entry.numeric = numeric;
        }
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

template <class F>
GradCheckReport grad_check(ParamSet<double>& params, F&& f, double eps = 1e-4) {
  std::vector<std::pair<std::string, Tensor<double>>> list(params.begin(),
                                                           params.end());
  return grad_check(std::move(list), std::forward<F>(f), eps);
}

}  // namespace rosita
