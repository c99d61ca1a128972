// SPDX-License-Identifier: Apache-2.0

#include "muscle/cl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "muscle/errors.hpp"
#include "muscle/rng.hpp"

namespace muscle {

void ScheduleConfig::validate() const {
  if (lr_max < lr_min || lr_min < 0.0) throw ContractError("schedule: need lr_max >= lr_min >= 0");
  if (batch == 0) throw ContractError("schedule: batch must be >= 1");
  if (weight_decay < 0.0) throw ContractError("schedule: weight_decay must be >= 0");
}

void RegConfig::validate() const {
  if (alpha < 0.0 || alpha > 1.0) throw ContractError("regularizer: alpha must be in [0,1]");
  if (lambda < 0.0) throw ContractError("regularizer: lambda must be >= 0");
}

double cosine_lr(std::size_t t, std::size_t period, double lr_min, double lr_max, bool half_cycle) {
  if (period == 0) throw ContractError("cosine_lr: period must be >= 1");
  if (lr_max < lr_min) throw ContractError("cosine_lr: lr_max < lr_min");
  const double phase = static_cast<double>(t % period) / static_cast<double>(period);
  const double angle = (half_cycle ? 1.0 : 2.0) * std::numbers::pi * phase;
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(angle));
}

RoundPlan reshuffle_tasks(std::size_t round_index, std::size_t n_tasks, std::uint64_t seed) {
  if (n_tasks == 0) throw ContractError("reshuffle_tasks: need at least one task");
  RoundPlan plan;
  plan.round_index = round_index;
  plan.order.resize(n_tasks);
  for (std::size_t i = 0; i < n_tasks; ++i) plan.order[i] = i;
  auto rng = make_rng(seed, {fnv1a("round_plan"), round_index});
  for (std::size_t i = n_tasks - 1; i > 0; --i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i)(rng);
    std::swap(plan.order[i], plan.order[j]);
  }
  return plan;
}

AnchorSnapshot snapshot_anchor(const ParamVector& backbone, std::size_t round, std::size_t iterate) {
  return AnchorSnapshot(flatten_params(backbone), round, iterate);
}

namespace {
void check_lengths(std::span<const double> w, std::span<const double> w0) {
  if (w.size() != w0.size())
    throw DimensionError("l2sp: weight vector of length " + std::to_string(w.size()) + " vs anchor of length " +
                         std::to_string(w0.size()));
}
}  // namespace

double anchor_term(std::span<const double> w, std::span<const double> w0, double alpha) {
  check_lengths(w, w0);
  double d = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) d += (w[i] - w0[i]) * (w[i] - w0[i]);
  return alpha * d;
}

double l2sp_penalty(std::span<const double> w, std::span<const double> w0, double alpha) {
  check_lengths(w, w0);
  double ridge = 0.0;
  for (double v : w) ridge += v * v;
  return anchor_term(w, w0, alpha) + (1.0 - alpha) * ridge;
}

double l2sp_penalty(std::span<const double> w, const AnchorSnapshot& anchor, double alpha) {
  return l2sp_penalty(w, anchor.w0(), alpha);
}

std::vector<double> l2sp_grad(std::span<const double> w, std::span<const double> w0, double alpha) {
  check_lengths(w, w0);
  std::vector<double> g(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) g[i] = 2.0 * alpha * (w[i] - w0[i]) + 2.0 * (1.0 - alpha) * w[i];
  return g;
}

std::vector<double> l2sp_grad(std::span<const double> w, const AnchorSnapshot& anchor, double alpha) {
  return l2sp_grad(w, anchor.w0(), alpha);
}

ClResult cl_train(const ParamVector& backbone0, const EncoderConfig& enc, const std::vector<TaskBinding>& tasks,
                  const ScheduleConfig& sched, const RegConfig& reg, const ClFlags& flags) {
  if (tasks.empty()) throw ContractError("cl_train: empty task list");
  sched.validate();
  reg.validate();
  for (const auto& t : tasks)
    if (t.train.empty()) throw ContractError("cl_train: task '" + t.task_id + "' has no training samples");

  ClResult out;
  out.backbone = backbone0;
  for (const auto& t : tasks) out.heads[t.task_id] = init_task_head(t.head, enc, sched.seed, t.task_id);

  std::size_t round_steps = 0;
  for (const auto& t : tasks) round_steps += steps_per_epoch(t.train.size(), sched.batch);
  const std::size_t period = sched.period ? sched.period : round_steps;

  std::size_t t_global = 0;
  std::size_t iterate = 0;
  for (std::size_t round = 0; round < sched.rounds; ++round) {
    RoundPlan plan;
    if (flags.reshuffle) {
      plan = reshuffle_tasks(round, tasks.size(), sched.seed);
    } else {
      plan.round_index = round;
      for (std::size_t i = 0; i < tasks.size(); ++i) plan.order.push_back(i);
    }
    for (std::size_t pos = 0; pos < plan.order.size(); ++pos, ++iterate) {
      const TaskBinding& task = tasks[plan.order[pos]];
      ParamVector& head = out.heads.at(task.task_id);
      const AnchorSnapshot anchor = snapshot_anchor(out.backbone, round, iterate);

      IterateTrace rec;
      rec.round = round;
      rec.task_id = task.task_id;
      rec.order_pos = pos;
      double loss_sum = 0.0;
      std::size_t steps = 0;
      const auto order = epoch_order(sched.seed, task.task_id, round, task.train.size());
      for_each_batch(task.train, order, sched.batch, [&](std::span<const Sample* const> batch) {
        const double lr = flags.cyclic_lr ? cosine_lr(t_global, period, sched.lr_min, sched.lr_max, sched.half_cycle)
                                          : sched.lr_max;
        auto g = batch_gradients(enc, task.head, out.backbone, head, batch);
        double loss = g.loss;
        if (flags.l2sp) {
          const auto w = flatten_params(out.backbone);
          if (steps == 0) rec.anchor_term_first_step = anchor_term(w, anchor.w0(), reg.alpha);
          loss += reg.lambda * l2sp_penalty(w, anchor, reg.alpha);
          auto gb = flatten_params(g.backbone);
          const auto gr = l2sp_grad(w, anchor, reg.alpha);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += reg.lambda * gr[i];
          sgd_step(out.backbone, unflatten_params(gb, out.backbone), lr, 0.0);
        } else {
          sgd_step(out.backbone, g.backbone, lr, sched.weight_decay);
        }
        sgd_step(head, g.head, lr, sched.weight_decay);
        if (steps == 0) rec.lr_first_step = lr;
        loss_sum += loss;
        ++steps;
        ++t_global;
      });
      rec.epoch_loss = loss_sum / static_cast<double>(steps);
      rec.drift_norm = std::sqrt(anchor_term(flatten_params(out.backbone), anchor.w0(), 1.0));
      out.trace.push_back(std::move(rec));
    }
  }
  return out;
}

void write_cl_trace_csv(const std::vector<IterateTrace>& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "round,task_id,task_order_pos,epoch_loss,lr_first_step,drift_norm\n";
  for (const auto& r : trace)
    out << r.round << ',' << r.task_id << ',' << r.order_pos << ',' << r.epoch_loss << ',' << r.lr_first_step << ','
        << r.drift_norm << '\n';
}

}  // namespace muscle
