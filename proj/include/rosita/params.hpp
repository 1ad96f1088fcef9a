#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rosita/tensor.hpp"

namespace rosita {

// Ordered collection of named trainable tensors. Iteration order is insertion
// order, which fixes checkpoint layout and optimizer update order.
template <class Scalar>
class ParamSet {
 public:
  using Item = std::pair<std::string, Tensor<Scalar>>;

  Tensor<Scalar> add(const std::string& name, Tensor<Scalar> t) {
    require(!index_.count(name), "ParamSet: duplicate parameter name " + name);
    index_.emplace(name, items_.size());
    items_.emplace_back(name, t);
    return t;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<Scalar>& get(const std::string& name) {
    auto it = index_.find(name);
    require(it != index_.end(), "ParamSet: unknown parameter " + name);
    return items_[it->second].second;
  }
  const Tensor<Scalar>& get(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "ParamSet: unknown parameter " + name);
    return items_[it->second].second;
  }

  std::size_t size() const { return items_.size(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  void zero_grad() {
    for (auto& [name, t] : items_) t.drop_grad();
  }

  void set_requires_grad(bool on) {
    for (auto& [name, t] : items_) t.set_requires_grad(on);
  }

  // Moves every parameter of `other` in under a prefix (submodule scoping).
  void adopt(const std::string& prefix, ParamSet<Scalar>& other) {
    for (auto& [name, t] : other) add(prefix + "." + name, t);
  }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items_) n += static_cast<std::size_t>(t.size());
    return n;
  }

 private:
  std::vector<Item> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace rosita
