// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "muscle/autograd.hpp"
#include "muscle/tensor.hpp"

namespace muscle {

/// Named parameter tensors. Iteration, and therefore flattening, follows
/// lexicographic name order.
class ParamVector {
 public:
  using Map = std::map<std::string, Tensor>;

  ParamVector() = default;
  explicit ParamVector(Map m) : params_(std::move(m)) {}

  void set(const std::string& name, Tensor t) { params_.insert_or_assign(name, std::move(t)); }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::size_t size() const noexcept { return params_.size(); }
  bool empty() const noexcept { return params_.empty(); }
  std::size_t total_numel() const;
  std::vector<std::string> names() const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

  /// Same names, same shapes.
  bool same_template(const ParamVector& other) const;
  /// Copy containing only names that start with `prefix`.
  ParamVector subset(const std::string& prefix) const;
  /// Zero tensors with this template.
  ParamVector zeros_like() const;
  /// Inserts every entry of `other`; names must not collide.
  void merge(const ParamVector& other);

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  Map params_;
};

std::vector<double> flatten_params(const ParamVector& p);
ParamVector unflatten_params(std::span<const double> v, const ParamVector& templ);

/// Parameters registered as leaves on one tape.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamVector& params, bool requires_grad);
  Var operator[](const std::string& name) const;
  /// Gradients after `tape.backward`, in the bound template.
  ParamVector gradients() const;

 private:
  Tape* tape_;
  std::map<std::string, Var> vars_;
};

/// w ← w − lr·(g + weight_decay·w), in place.
void sgd_step(ParamVector& params, const ParamVector& grads, double lr, double weight_decay);

}  // namespace muscle
