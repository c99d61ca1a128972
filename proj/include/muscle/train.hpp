// SPDX-License-Identifier: Apache-2.0
//
// Supervised task plumbing shared by continual learning and fine-tuning.
//
// Batches are processed one tape per sample. Samples fan out over OpenMP
// threads and per-sample gradients are reduced in batch-index order, so
// results are bit-identical for any thread count.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "muscle/nets.hpp"
#include "muscle/preprocess.hpp"

namespace muscle {

/// One supervised task: dataset splits plus the head it trains.
struct TaskBinding {
  std::string task_id;
  HeadConfig head;
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

/// Loss of one sample: softmax CE for classification, per-pixel CE on the
/// head output upsampled (nearest) to input resolution for segmentation.
Var sample_task_loss(Tape& tape, const EncoderConfig& enc, const HeadConfig& head, const BoundParams& backbone,
                     const BoundParams& head_params, const Sample& s);

struct BatchGradients {
  double loss = 0.0;  // batch mean
  ParamVector backbone;
  ParamVector head;
};

BatchGradients batch_gradients(const EncoderConfig& enc, const HeadConfig& head, const ParamVector& backbone,
                               const ParamVector& head_params, std::span<const Sample* const> batch);

/// Seeded permutation of 0..n-1 for one epoch of one task.
std::vector<std::size_t> epoch_order(std::uint64_t seed, const std::string& task_id, std::uint64_t epoch,
                                     std::size_t n);

/// Fresh head for a task, keyed on (seed, task_id).
ParamVector init_task_head(const HeadConfig& head, const EncoderConfig& enc, std::uint64_t seed,
                           const std::string& task_id);

struct EpochStats {
  double mean_loss = 0.0;
  std::size_t steps = 0;
};

/// Runs `fn(batch)` over `order` in chunks of `batch_size`.
template <typename Fn>
void for_each_batch(const std::vector<Sample>& data, const std::vector<std::size_t>& order, std::size_t batch_size,
                    Fn&& fn) {
  std::vector<const Sample*> batch;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    batch.clear();
    for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) batch.push_back(&data[order[i]]);
    fn(std::span<const Sample* const>(batch));
  }
}

inline std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size) {
  return (n + batch_size - 1) / batch_size;
}

/// Softmax probability of class 1 for every sample.
std::vector<double> positive_scores(const EncoderConfig& enc, const HeadConfig& head, const ParamVector& backbone,
                                    const ParamVector& head_params, const std::vector<Sample>& samples);
/// Argmax label per pixel at input resolution.
std::vector<std::vector<int>> predict_masks(const EncoderConfig& enc, const HeadConfig& head,
                                            const ParamVector& backbone, const ParamVector& head_params,
                                            const std::vector<Sample>& samples);

}  // namespace muscle
