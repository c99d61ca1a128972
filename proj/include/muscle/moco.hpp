// SPDX-License-Identifier: Apache-2.0
//
// Momentum-contrastive pre-training over an aggregated multi-dataset pool.
//
// A gradient-trained query encoder is paired with a key encoder that only
// follows it by exponential moving average. Keys from past batches sit in a
// fixed-size FIFO queue and serve as negatives for the InfoNCE loss.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "muscle/nets.hpp"
#include "muscle/preprocess.hpp"

namespace muscle {

struct MoCoConfig {
  std::size_t epochs = 5;
  std::size_t batch = 32;
  double lr = 0.05;       // peak of the cosine schedule
  double lr_min = 0.001;  // trough of the cosine schedule
  double weight_decay = 1e-4;
  double momentum = 0.999;
  double temperature = 0.07;
  std::size_t queue_size = 512;
  bool half_cycle = false;
  AugmentFlags augment;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MoCoState {
  ParamVector query;
  ParamVector key;
  std::vector<double> queue;  // queue_size × dim, rows unit-norm
  std::size_t queue_size = 0;
  std::size_t dim = 0;
  std::size_t queue_ptr = 0;
  double momentum = 0.999;
  double temperature = 0.07;

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(queue).subspan(i * dim, dim);
  }
};

/// Query and key both set to one Kaiming initialization; queue filled with
/// random unit vectors.
MoCoState init_moco_state(const EncoderConfig& enc, const MoCoConfig& cfg);

/// θ_k ← m·θ_k + (1−m)·θ_q, elementwise and in place.
void momentum_update(ParamVector& key, const ParamVector& query, double m);

/// −log softmax over [q·k⁺, q·queue_0, …]/τ at the positive. Only `q` is on
/// the tape; the positive key and the queue are plain values.
Var infonce_loss(Var q, const Tensor& k_pos, std::span<const double> queue, std::size_t queue_rows,
                 double temperature);

/// Writes unit-norm keys at queue_ptr with wraparound.
void enqueue_dequeue(MoCoState& state, const std::vector<Tensor>& keys);

struct EpochLoss {
  std::size_t epoch;
  double mean_loss;
};

struct MoCoResult {
  ParamVector backbone;  // query encoder
  std::vector<EpochLoss> trace;
  MoCoState state;
};

/// Per step: two augmented views per image; the query encoder embeds view 1
/// with gradients, the key encoder embeds view 2 without; InfoNCE against
/// the queue; SGD on the query; momentum update; enqueue keys.
MoCoResult md_moco_pretrain(const std::vector<Sample>& pool, const EncoderConfig& enc, const MoCoConfig& cfg);
/// Same, with query and key encoders both starting from `init`.
MoCoResult md_moco_pretrain(const std::vector<Sample>& pool, const EncoderConfig& enc, const MoCoConfig& cfg,
                            const ParamVector& init);

void write_loss_trace_csv(const std::vector<EpochLoss>& trace, const std::filesystem::path& path);

}  // namespace muscle
