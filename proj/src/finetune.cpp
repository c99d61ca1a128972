// SPDX-License-Identifier: Apache-2.0

#include "muscle/finetune.hpp"

#include <cmath>
#include <fstream>

#include "muscle/errors.hpp"

namespace muscle {

void FinetuneConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ContractError("finetune: gamma must be in (0,1]");
  if (step_size == 0) throw ContractError("finetune: step_size must be >= 1");
  if (batch == 0) throw ContractError("finetune: batch must be >= 1");
  if (base_lr < 0.0 || weight_decay < 0.0) throw ContractError("finetune: lr and weight_decay must be >= 0");
}

double FinetuneConfig::lr_at(std::size_t epoch) const {
  return base_lr * std::pow(gamma, static_cast<double>(epoch / step_size));
}

ParamVector TaskModel::merged() const {
  ParamVector p = backbone;
  p.merge(head);
  return p;
}

double EvalReport::headline() const {
  const auto& v = metrics.at(kind == HeadKind::classification ? "auc" : "dice");
  return v.value_or(0.0);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["task_id"] = task_id;
  j["kind"] = to_string(kind);
  j["n_test"] = n_test;
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [k, v] : metrics) m[k] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  j["metrics"] = std::move(m);
  return j;
}

EvalReport evaluate_task(const TaskModel& model, const TaskBinding& task, const EncoderConfig& enc,
                         const FinetuneConfig& cfg) {
  if (task.test.empty()) throw ContractError("evaluate: task '" + task.task_id + "' has an empty test split");
  EvalReport r;
  r.task_id = task.task_id;
  r.kind = model.head_cfg.kind;
  r.n_test = task.test.size();
  if (r.kind == HeadKind::classification) {
    const auto scores = positive_scores(enc, model.head_cfg, model.backbone, model.head, task.test);
    std::vector<int> labels;
    for (const auto& s : task.test) labels.push_back(s.label);
    const auto cm = classification_metrics(scores, labels, cfg.threshold);
    r.metrics["acc"] = cm.acc;
    r.metrics["sen"] = cm.sen;
    r.metrics["spe"] = cm.spe;
    try {
      r.metrics["auc"] = auc_mann_whitney(scores, labels);
      const auto ci = bootstrap_auc_ci(scores, labels, cfg.bootstrap_trials, 0.95,
                                       derive_seed(cfg.seed, {fnv1a(task.task_id)}));
      r.metrics["auc_ci_low"] = ci.low;
      r.metrics["auc_ci_high"] = ci.high;
    } catch (const UndefinedMetricError&) {
      r.metrics["auc"] = r.metrics["auc_ci_low"] = r.metrics["auc_ci_high"] = std::nullopt;
    }
  } else {
    const auto preds = predict_masks(enc, model.head_cfg, model.backbone, model.head, task.test);
    // Pixels are pooled across the whole test split.
    std::vector<int> p, g;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      p.insert(p.end(), preds[i].begin(), preds[i].end());
      g.insert(g.end(), task.test[i].mask.begin(), task.test[i].mask.end());
    }
    const auto sm = segmentation_metrics(p, g, static_cast<int>(model.head_cfg.num_classes));
    r.metrics["dice"] = sm.dice;
    r.metrics["miou"] = sm.miou;
  }
  return r;
}

FinetuneResult finetune_task(const ParamVector& backbone, const TaskBinding& task, const EncoderConfig& enc,
                             const FinetuneConfig& cfg) {
  cfg.validate();
  if (task.train.empty() || task.test.empty())
    throw ContractError("finetune: task '" + task.task_id + "' has an empty train or test split");
  FinetuneResult out;
  TaskModel& m = out.model;
  m.task_id = task.task_id;
  m.head_cfg = task.head;
  m.backbone = backbone;
  m.head = init_task_head(task.head, enc, cfg.seed, task.task_id);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at(epoch);
    const auto order = epoch_order(cfg.seed, task.task_id, epoch, task.train.size());
    for_each_batch(task.train, order, cfg.batch, [&](std::span<const Sample* const> batch) {
      auto g = batch_gradients(enc, task.head, m.backbone, m.head, batch);
      sgd_step(m.backbone, g.backbone, lr, cfg.weight_decay);
      sgd_step(m.head, g.head, lr, cfg.weight_decay);
    });
  }
  out.report = evaluate_task(m, task, enc, cfg);
  return out;
}

void write_report_json(const EvalReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << r.to_json().dump(2) << '\n';
}

void append_leaderboard_csv(const std::filesystem::path& path, const std::string& run_id, const std::string& variant,
                            std::uint64_t seed, const EvalReport& r) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  if (fresh) out << "run_id,variant,seed,task_id,metric,value\n";
  for (const auto& [k, v] : r.metrics) {
    out << run_id << ',' << variant << ',' << seed << ',' << r.task_id << ',' << k << ',';
    if (v)
      out << *v;
    else
      out << "NA";
    out << '\n';
  }
}

void write_roc_csv(const TaskModel& model, const TaskBinding& task, const EncoderConfig& enc,
                   const std::filesystem::path& path) {
  const auto scores = positive_scores(enc, model.head_cfg, model.backbone, model.head, task.test);
  std::vector<int> labels;
  for (const auto& s : task.test) labels.push_back(s.label);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "threshold,fpr,tpr\n";
  for (const auto& p : roc_points(scores, labels)) out << p.threshold << ',' << p.fpr << ',' << p.tpr << '\n';
}

}  // namespace muscle
