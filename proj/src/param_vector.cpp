// SPDX-License-Identifier: Apache-2.0

#include "muscle/param_vector.hpp"

#include "muscle/errors.hpp"

namespace muscle {

const Tensor& ParamVector::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("no parameter named '" + name + "'");
  return it->second;
}

Tensor& ParamVector::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("no parameter named '" + name + "'");
  return it->second;
}

std::size_t ParamVector::total_numel() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

std::vector<std::string> ParamVector::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

bool ParamVector::same_template(const ParamVector& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto it = other.params_.begin();
  for (const auto& [name, t] : params_) {
    if (name != it->first || t.shape() != it->second.shape()) return false;
    ++it;
  }
  return true;
}

ParamVector ParamVector::subset(const std::string& prefix) const {
  ParamVector out;
  for (const auto& [name, t] : params_)
    if (name.rfind(prefix, 0) == 0) out.set(name, t);
  return out;
}

ParamVector ParamVector::zeros_like() const {
  ParamVector out;
  for (const auto& [name, t] : params_) out.set(name, Tensor(t.shape(), 0.0));
  return out;
}

void ParamVector::merge(const ParamVector& other) {
  for (const auto& [name, t] : other.params_) {
    if (params_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
    params_.emplace(name, t);
  }
}

std::vector<double> flatten_params(const ParamVector& p) {
  std::vector<double> out;
  out.reserve(p.total_numel());
  for (const auto& [_, t] : p) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

ParamVector unflatten_params(std::span<const double> v, const ParamVector& templ) {
  if (v.size() != templ.total_numel())
    throw DimensionError("unflatten: vector of length " + std::to_string(v.size()) + " for template of " +
                         std::to_string(templ.total_numel()) + " values");
  ParamVector out;
  std::size_t off = 0;
  for (const auto& [name, t] : templ) {
    auto first = v.begin() + static_cast<std::ptrdiff_t>(off);
    out.set(name, Tensor(t.shape(), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(t.numel()))));
    off += t.numel();
  }
  return out;
}

BoundParams::BoundParams(Tape& tape, const ParamVector& params, bool requires_grad) : tape_(&tape) {
  for (const auto& [name, t] : params) vars_.emplace(name, tape.leaf(t, requires_grad));
}

Var BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ContractError("no bound parameter named '" + name + "'");
  return it->second;
}

ParamVector BoundParams::gradients() const {
  ParamVector out;
  for (const auto& [name, v] : vars_) out.set(name, tape_->grad(v));
  return out;
}

void sgd_step(ParamVector& params, const ParamVector& grads, double lr, double weight_decay) {
  if (lr < 0.0 || weight_decay < 0.0) throw ContractError("sgd_step: lr and weight_decay must be >= 0");
  if (!params.same_template(grads)) throw DimensionError("sgd_step: gradient template does not match parameters");
  auto git = grads.begin();
  for (auto& [name, w] : params) {
    const auto& g = git->second;
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] -= lr * (g[i] + weight_decay * w[i]);
    ++git;
  }
}

}  // namespace muscle
