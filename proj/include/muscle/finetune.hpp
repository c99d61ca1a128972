// SPDX-License-Identifier: Apache-2.0
//
// Independent per-task fine-tuning (fresh head, private backbone copy,
// plain weight decay, step-decayed learning rate) and test-split evaluation.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "json.hpp"
#include "muscle/metrics.hpp"
#include "muscle/train.hpp"

namespace muscle {

struct FinetuneConfig {
  std::size_t epochs = 20;
  double base_lr = 0.01;
  double weight_decay = 1e-4;
  std::size_t step_size = 8;
  double gamma = 0.1;
  std::size_t batch = 16;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  std::size_t bootstrap_trials = 100;

  void validate() const;
  /// base_lr · gamma^floor(epoch / step_size)
  double lr_at(std::size_t epoch) const;
};

struct TaskModel {
  std::string task_id;
  HeadConfig head_cfg;
  ParamVector backbone;
  ParamVector head;

  /// Backbone and head merged under their "enc.*" / "head.*" names.
  ParamVector merged() const;
};

struct EvalReport {
  std::string task_id;
  HeadKind kind = HeadKind::classification;
  /// acc, auc, auc_ci_low, auc_ci_high, sen, spe  |  dice, miou.
  /// nullopt marks an undefined metric.
  std::map<std::string, std::optional<double>> metrics;
  std::size_t n_test = 0;

  /// AUC for classification, Dice for segmentation.
  double headline() const;
  nlohmann::json to_json() const;
};

EvalReport evaluate_task(const TaskModel& model, const TaskBinding& task, const EncoderConfig& enc,
                         const FinetuneConfig& cfg);

struct FinetuneResult {
  TaskModel model;
  EvalReport report;
};

FinetuneResult finetune_task(const ParamVector& backbone, const TaskBinding& task, const EncoderConfig& enc,
                             const FinetuneConfig& cfg);

void write_report_json(const EvalReport& r, const std::filesystem::path& path);
/// Appends one row per metric; writes the header when the file is new.
void append_leaderboard_csv(const std::filesystem::path& path, const std::string& run_id, const std::string& variant,
                            std::uint64_t seed, const EvalReport& r);
/// fpr,tpr per threshold on the test split.
void write_roc_csv(const TaskModel& model, const TaskBinding& task, const EncoderConfig& enc,
                   const std::filesystem::path& path);

}  // namespace muscle
