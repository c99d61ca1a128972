// SPDX-License-Identifier: Apache-2.0

#include <optional>

#include "doctest.h"
#include "muscle/errors.hpp"
#include "muscle/nets.hpp"
#include "muscle/param_vector.hpp"
#include "support.hpp"

using namespace muscle;
using namespace muscle::testing;

namespace {

EncoderConfig small_encoder() {
  EncoderConfig e;
  e.convs = {{3, 3, 2}, {4, 3, 2}};
  e.feature_dim = 3;
  e.input_h = 8;
  e.input_w = 8;
  return e;
}

// Scalar loss of one image through encoder (+ optional head), as a function
// of the flattened parameters; used by the finite-difference oracle.
double param_loss(const EncoderConfig& enc, const ParamVector& params, const Tensor& img,
                  const std::optional<HeadConfig>& head, std::span<const int> labels, bool with_grad,
                  std::vector<double>* grad) {
  Tape tape;
  BoundParams bp(tape, params, with_grad);
  auto out = encoder_forward(enc, bp, tape.constant(img));
  Var loss;
  if (!head) {
    loss = weighted_sum(tape, out.embedding, 99);
  } else if (head->kind == HeadKind::classification) {
    loss = softmax_cross_entropy(head_forward(*head, bp, out), labels);
  } else {
    loss = pixel_cross_entropy(head_forward(*head, bp, out), labels);
  }
  if (with_grad) {
    tape.backward(loss);
    *grad = flatten_params(bp.gradients());
  }
  return loss.value().item();
}

double check_params(const EncoderConfig& enc, const ParamVector& params, const Tensor& img,
                    const std::optional<HeadConfig>& head, std::span<const int> labels) {
  std::vector<double> analytic;
  param_loss(enc, params, img, head, labels, true, &analytic);
  auto flat = flatten_params(params);
  std::vector<double> numeric(flat.size());
  const double eps = 1e-6;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double x = flat[i];
    flat[i] = x + eps;
    const double up = param_loss(enc, unflatten_params(flat, params), img, head, labels, false, nullptr);
    flat[i] = x - eps;
    const double down = param_loss(enc, unflatten_params(flat, params), img, head, labels, false, nullptr);
    flat[i] = x;
    numeric[i] = (up - down) / (2 * eps);
  }
  return relative_error(analytic, numeric);
}

ParamVector randomized_biases(ParamVector p, Rng& rng) {
  // Nonzero biases so relu kinks are not hit exactly and bias gradients
  // are exercised.
  for (auto& [name, t] : p)
    if (name.ends_with(".b"))
      for (auto& v : t.data()) v = std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
  return p;
}

}  // namespace

TEST_CASE("kaiming_init statistics and determinism") {
  auto r1 = make_rng(5), r2 = make_rng(5);
  const auto a = kaiming_init({100000}, 2, r1);
  CHECK(a == kaiming_init({100000}, 2, r2));
  double m = 0.0, s = 0.0;
  for (double v : a.data()) m += v;
  m /= 1e5;
  for (double v : a.data()) s += (v - m) * (v - m);
  s = std::sqrt(s / (1e5 - 1));
  CHECK(std::abs(m) < 0.01);
  CHECK(std::abs(s - 1.0) < 0.02);
  CHECK_THROWS_AS(kaiming_init({3}, 0, r1), ContractError);
}

TEST_CASE("encoder shape contracts") {
  EncoderConfig e;
  e.validate();
  CHECK(e.feature_map_shape() == Shape{32, 4, 4});
  auto rng = make_rng(1);
  const auto p = init_encoder(e, rng);
  const auto z = encoder_forward(e, p, random_tensor({1, 32, 32}, rng));
  CHECK(z.numel() == e.feature_dim);
  CHECK_THROWS_AS(encoder_forward(e, p, Tensor({1, 30, 32})), DimensionError);
  for (const auto& [name, t] : p)
    if (name.ends_with(".b"))
      for (double v : t.data()) CHECK(v == 0.0);

  EncoderConfig bad = e;
  bad.feature_dim = 1;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = e;
  bad.convs = {{4, 3, 0}};
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("zero parameters give a zero embedding") {
  EncoderConfig e;
  auto rng = make_rng(2);
  const auto p = init_encoder(e, rng).zeros_like();
  const auto z = encoder_forward(e, p, random_tensor({1, 32, 32}, rng));
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("heads: output shapes and kind contracts") {
  EncoderConfig e;
  auto rng = make_rng(3);
  const auto enc = init_encoder(e, rng);
  HeadConfig cls{HeadKind::classification, 3};
  HeadConfig seg{HeadKind::segmentation, 2};
  auto params = enc;
  params.merge(init_head(cls, e, rng));
  auto seg_params = enc;
  seg_params.merge(init_head(seg, e, rng));

  Tape tape;
  BoundParams bp(tape, params, false);
  BoundParams sp(tape, seg_params, false);
  const auto out = encoder_forward(e, bp, tape.constant(random_tensor({1, 32, 32}, rng)));
  CHECK(head_forward(cls, bp, out).value().numel() == 3);
  const auto seg_out = head_forward(seg, sp, out);
  CHECK(seg_out.shape() == Shape{2, 4, 4});
  CHECK_THROWS_AS(head_forward(cls, bp, out.feature_map), ContractError);
  CHECK_THROWS_AS(head_forward(seg, sp, out.embedding), ContractError);
  CHECK_THROWS_AS(head_kind_from_string("detection"), ContractError);
  CHECK(head_kind_from_string(to_string(HeadKind::segmentation)) == HeadKind::segmentation);
}

TEST_CASE("finite differences through the encoder") {
  const auto e = small_encoder();
  for (int inst = 0; inst < 5; ++inst) {
    auto rng = make_rng(40, {static_cast<std::uint64_t>(inst)});
    const auto p = randomized_biases(init_encoder(e, rng), rng);
    CHECK(check_params(e, p, random_tensor({1, 8, 8}, rng), std::nullopt, {}) < 1e-5);
  }
}

TEST_CASE("finite differences through both head kinds") {
  const auto e = small_encoder();
  for (int inst = 0; inst < 5; ++inst) {
    auto rng = make_rng(41, {static_cast<std::uint64_t>(inst)});
    HeadConfig cls{HeadKind::classification, 2};
    auto p = init_encoder(e, rng);
    p.merge(init_head(cls, e, rng));
    p = randomized_biases(p, rng);
    const std::vector<int> label{inst % 2};
    CHECK(check_params(e, p, random_tensor({1, 8, 8}, rng), cls, label) < 1e-5);

    HeadConfig seg{HeadKind::segmentation, 2};
    auto q = init_encoder(e, rng);
    q.merge(init_head(seg, e, rng));
    q = randomized_biases(q, rng);
    std::vector<int> mask(e.feature_map_shape()[1] * e.feature_map_shape()[2]);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = static_cast<int>((i + inst) % 2);
    CHECK(check_params(e, q, random_tensor({1, 8, 8}, rng), seg, mask) < 1e-5);
  }
}

TEST_CASE("flatten/unflatten") {
  ParamVector p;
  p.set("b", Tensor({3}, std::vector<double>{5, 6, 7}));
  p.set("a", Tensor({2, 2}, std::vector<double>{1, 2, 3, 4}));
  const auto flat = flatten_params(p);
  CHECK(flat == std::vector<double>{1, 2, 3, 4, 5, 6, 7});  // name-sorted
  CHECK(unflatten_params(flat, p) == p);
  double sq = 0.0;
  for (double v : flat) sq += v * v;
  CHECK(sq == p.at("a").squared_norm() + p.at("b").squared_norm());
  CHECK_THROWS_AS(unflatten_params(std::vector<double>(6), p), DimensionError);

  auto rng = make_rng(9);
  const auto enc = init_encoder(EncoderConfig{}, rng);
  CHECK(unflatten_params(flatten_params(enc), enc) == enc);
}

TEST_CASE("head parameters are disjoint per task") {
  EncoderConfig e;
  auto rng = make_rng(4);
  const auto head_a = init_head({HeadKind::classification, 2}, e, rng);
  auto head_b = init_head({HeadKind::classification, 2}, e, rng);
  const auto before = head_b;
  auto a = head_a;
  sgd_step(a, head_a, 0.1, 0.0);
  CHECK(head_b == before);
  CHECK_FALSE(a == head_a);
}

TEST_CASE("sgd_step contracts") {
  ParamVector p;
  p.set("w", Tensor({2}, std::vector<double>{1.0, -2.0}));
  ParamVector g;
  g.set("w", Tensor({2}, std::vector<double>{0.5, 0.5}));
  sgd_step(p, g, 0.1, 0.1);
  CHECK(p.at("w")[0] == doctest::Approx(1.0 - 0.1 * (0.5 + 0.1)).epsilon(1e-15));
  CHECK(p.at("w")[1] == doctest::Approx(-2.0 - 0.1 * (0.5 - 0.2)).epsilon(1e-15));
  ParamVector wrong;
  wrong.set("v", Tensor({2}));
  CHECK_THROWS_AS(sgd_step(p, wrong, 0.1, 0.0), DimensionError);
  CHECK_THROWS_AS(sgd_step(p, g, -0.1, 0.0), ContractError);
}
