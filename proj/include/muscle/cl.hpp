// SPDX-License-Identifier: Apache-2.0
//
// Multi-task continual learning: a shared backbone trained task after task
// with task-specific heads, in rounds.
//
//  * Each round visits every task once (one "iterate" = one epoch on one
//    task); the task order may be reshuffled per round.
//  * The learning rate follows a cyclic cosine schedule over global steps.
//  * At the start of every iterate the backbone is snapshotted as the anchor
//    w0, and the backbone update carries the penalty
//        Ω(w) = α‖w − w0‖² + (1 − α)‖w‖²
//    scaled by λ.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "muscle/train.hpp"

namespace muscle {

struct ScheduleConfig {
  std::size_t rounds = 10;
  double lr_max = 0.05;
  double lr_min = 0.001;
  /// Optimizer steps per cosine period; 0 means one round's worth of steps.
  std::size_t period = 0;
  /// Conventional half-period cosine (π instead of 2π).
  bool half_cycle = false;
  std::size_t batch = 16;
  /// Plain decay for heads, and for the backbone when anchoring is off.
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RegConfig {
  double alpha = 0.5;
  double lambda = 0.01;

  void validate() const;
};

struct ClFlags {
  bool reshuffle = true;
  bool cyclic_lr = true;
  bool l2sp = true;

  static ClFlags all_off() { return {false, false, false}; }
};

/// η_t = η_min + ½(η_max − η_min)(1 + cos(2π·(t mod T)/T)); with
/// `half_cycle` the angle is π·(t mod T)/T.
double cosine_lr(std::size_t t, std::size_t period, double lr_min, double lr_max, bool half_cycle = false);

struct RoundPlan {
  std::size_t round_index = 0;
  std::vector<std::size_t> order;  // permutation of task indices
};

/// Fisher–Yates permutation keyed on (seed, round_index).
RoundPlan reshuffle_tasks(std::size_t round_index, std::size_t n_tasks, std::uint64_t seed);

/// Frozen copy of the flattened backbone at the start of an iterate.
class AnchorSnapshot {
 public:
  AnchorSnapshot(std::vector<double> w0, std::size_t round, std::size_t iterate)
      : w0_(std::move(w0)), round_(round), iterate_(iterate) {}

  std::span<const double> w0() const noexcept { return w0_; }
  std::size_t round() const noexcept { return round_; }
  std::size_t iterate() const noexcept { return iterate_; }

 private:
  std::vector<double> w0_;
  std::size_t round_;
  std::size_t iterate_;
};

AnchorSnapshot snapshot_anchor(const ParamVector& backbone, std::size_t round, std::size_t iterate);

double l2sp_penalty(std::span<const double> w, std::span<const double> w0, double alpha);
double l2sp_penalty(std::span<const double> w, const AnchorSnapshot& anchor, double alpha);
/// 2α(w − w0) + 2(1 − α)w
std::vector<double> l2sp_grad(std::span<const double> w, std::span<const double> w0, double alpha);
std::vector<double> l2sp_grad(std::span<const double> w, const AnchorSnapshot& anchor, double alpha);
/// α‖w − w0‖², the anchor part of Ω alone.
double anchor_term(std::span<const double> w, std::span<const double> w0, double alpha);

struct IterateTrace {
  std::size_t round = 0;
  std::string task_id;
  std::size_t order_pos = 0;
  double epoch_loss = 0.0;  // mean over steps of task loss (+ λΩ when anchored)
  double lr_first_step = 0.0;
  double drift_norm = 0.0;  // ‖w − w0‖ at epoch end
  double anchor_term_first_step = 0.0;
};

struct ClResult {
  ParamVector backbone;
  std::map<std::string, ParamVector> heads;
  std::vector<IterateTrace> trace;
};

ClResult cl_train(const ParamVector& backbone0, const EncoderConfig& enc, const std::vector<TaskBinding>& tasks,
                  const ScheduleConfig& sched, const RegConfig& reg, const ClFlags& flags);

/// round,task_id,task_order_pos,epoch_loss,lr_first_step,drift_norm
void write_cl_trace_csv(const std::vector<IterateTrace>& trace, const std::filesystem::path& path);

}  // namespace muscle
