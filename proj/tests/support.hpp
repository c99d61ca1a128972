// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the test suites and the acceptance runner.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "muscle/autograd.hpp"
#include "muscle/rng.hpp"
#include "muscle/tensor.hpp"

namespace muscle::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

/// Like random_tensor but every entry has magnitude ≥ gap, so kinks at 0
/// are never within a finite-difference step.
inline Tensor random_tensor_away_from_zero(const Shape& shape, Rng& rng, double gap = 0.05) {
  Tensor t(shape);
  std::uniform_real_distribution<double> u(gap, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.data()) v = sign(rng) ? u(rng) : -u(rng);
  return t;
}

/// ‖a − b‖₂ / max(‖a‖₂ + ‖b‖₂, floor)
inline double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max(std::sqrt(na) + std::sqrt(nb), floor);
}

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double eval_scalar(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vs;
  for (const auto& t : inputs) vs.push_back(tape.leaf(t, false));
  return f(tape, vs).value().item();
}

/// Largest relative error between reverse-mode and central-difference
/// gradients over all inputs.
inline double gradient_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double eps = 1e-6) {
  Tape tape;
  std::vector<Var> vs;
  for (const auto& t : inputs) vs.push_back(tape.leaf(t, true));
  tape.backward(f(tape, vs));
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = tape.grad(vs[k]);
    std::vector<double> numeric(inputs[k].numel());
    std::vector<Tensor> probe = inputs;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double x = inputs[k][i];
      probe[k][i] = x + eps;
      const double up = eval_scalar(f, probe);
      probe[k][i] = x - eps;
      const double down = eval_scalar(f, probe);
      probe[k][i] = x;
      numeric[i] = (up - down) / (2.0 * eps);
    }
    worst = std::max(worst, relative_error(analytic.data(), numeric));
  }
  return worst;
}

/// Reduces a tensor-valued op to a scalar with fixed random weights so every
/// output element contributes a distinct cotangent.
inline Var weighted_sum(Tape& tape, Var y, std::uint64_t seed) {
  auto rng = make_rng(seed, {0x5eed});
  Var w = tape.constant(random_tensor(y.shape(), rng));
  return sum(mul(y, w));
}

}  // namespace muscle::testing
