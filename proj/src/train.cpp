// SPDX-License-Identifier: Apache-2.0

#include "muscle/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>

#include "muscle/errors.hpp"
#include "muscle/rng.hpp"

namespace muscle {

Var sample_task_loss(Tape& tape, const EncoderConfig& enc, const HeadConfig& head, const BoundParams& backbone,
                     const BoundParams& head_params, const Sample& s) {
  const auto out = encoder_forward(enc, backbone, tape.constant(s.image));
  Var logits = head_forward(head, head_params, out);
  if (head.kind == HeadKind::classification) {
    const int label = s.label;
    return softmax_cross_entropy(logits, std::span<const int>(&label, 1));
  }
  if (s.mask.empty()) throw ContractError("segmentation sample from '" + s.dataset_id + "' has no mask");
  Var up = upsample_nearest(logits, s.image.dim(1), s.image.dim(2));
  return pixel_cross_entropy(up, s.mask);
}

namespace {

// Runs body(i) for i in [0, n) across OpenMP threads; rethrows the first
// exception on the calling thread.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  std::exception_ptr err;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace

BatchGradients batch_gradients(const EncoderConfig& enc, const HeadConfig& head, const ParamVector& backbone,
                               const ParamVector& head_params, std::span<const Sample* const> batch) {
  if (batch.empty()) throw ContractError("batch_gradients: empty batch");
  const std::size_t nb = backbone.total_numel(), nh = head_params.total_numel();
  std::vector<std::vector<double>> grads(batch.size());
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    Tape tape;
    BoundParams bb(tape, backbone, true);
    BoundParams hh(tape, head_params, true);
    Var loss = sample_task_loss(tape, enc, head, bb, hh, *batch[i]);
    tape.backward(loss);
    losses[i] = loss.value().item();
    auto g = flatten_params(bb.gradients());
    auto gh = flatten_params(hh.gradients());
    g.insert(g.end(), gh.begin(), gh.end());
    grads[i] = std::move(g);
  });

  std::vector<double> total(nb + nh, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t j = 0; j < total.size(); ++j) total[j] += grads[i][j];
    loss += losses[i];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& v : total) v *= inv;

  BatchGradients out;
  out.loss = loss * inv;
  out.backbone = unflatten_params(std::span<const double>(total).first(nb), backbone);
  out.head = unflatten_params(std::span<const double>(total).subspan(nb), head_params);
  return out;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, const std::string& task_id, std::uint64_t epoch,
                                     std::size_t n) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  auto rng = make_rng(seed, {fnv1a("epoch_order"), fnv1a(task_id), epoch});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

ParamVector init_task_head(const HeadConfig& head, const EncoderConfig& enc, std::uint64_t seed,
                           const std::string& task_id) {
  auto rng = make_rng(seed, {fnv1a("head"), fnv1a(task_id)});
  return init_head(head, enc, rng);
}

std::vector<double> positive_scores(const EncoderConfig& enc, const HeadConfig& head, const ParamVector& backbone,
                                    const ParamVector& head_params, const std::vector<Sample>& samples) {
  if (head.kind != HeadKind::classification) throw ContractError("positive_scores needs a classification head");
  std::vector<double> scores(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    Tape tape;
    BoundParams bb(tape, backbone, false);
    BoundParams hh(tape, head_params, false);
    const auto out = encoder_forward(enc, bb, tape.constant(samples[i].image));
    const auto& z = head_forward(head, hh, out).value();
    double mx = z[0];
    for (std::size_t c = 1; c < z.numel(); ++c) mx = std::max(mx, z[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < z.numel(); ++c) denom += std::exp(z[c] - mx);
    scores[i] = std::exp(z[1] - mx) / denom;
  });
  return scores;
}

std::vector<std::vector<int>> predict_masks(const EncoderConfig& enc, const HeadConfig& head,
                                            const ParamVector& backbone, const ParamVector& head_params,
                                            const std::vector<Sample>& samples) {
  if (head.kind != HeadKind::segmentation) throw ContractError("predict_masks needs a segmentation head");
  std::vector<std::vector<int>> masks(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    Tape tape;
    BoundParams bb(tape, backbone, false);
    BoundParams hh(tape, head_params, false);
    const auto& img = samples[i].image;
    const auto out = encoder_forward(enc, bb, tape.constant(img));
    const auto& z = upsample_nearest(head_forward(head, hh, out), img.dim(1), img.dim(2)).value();
    const std::size_t nl = z.dim(0), np = z.dim(1) * z.dim(2);
    std::vector<int> m(np, 0);
    for (std::size_t p = 0; p < np; ++p) {
      std::size_t best = 0;
      for (std::size_t l = 1; l < nl; ++l)
        if (z[l * np + p] > z[best * np + p]) best = l;
      m[p] = static_cast<int>(best);
    }
    masks[i] = std::move(m);
  });
  return masks;
}

}  // namespace muscle
