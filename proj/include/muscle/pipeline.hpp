// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration: run configuration, the three training stages,
// the pipeline variants, and the multi-seed ablation.
//
// Run directory layout:
//   config.json                  the RunConfig that produced the run
//   checkpoints/stage0_init.ckpt Kaiming-initialized backbone
//   checkpoints/stage1_pretrain.ckpt, stage1_loss.csv   (contrastive stage)
//   checkpoints/stage2_cl.ckpt, stage2_trace.csv        (continual stage)
//   models/<task>.ckpt           fine-tuned backbone + head per task
//   reports/<task>.json, roc/<task>.csv
//   metrics.csv                  task_id,kind,metric,value

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "muscle/cl.hpp"
#include "muscle/finetune.hpp"
#include "muscle/moco.hpp"
#include "muscle/synth.hpp"

namespace muscle {

/// Invalid or inconsistent run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A pipeline stage failed; `stage()` names it.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

enum class Variant { scratch, foreign, md_moco, muscle_minus, muscle };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
const std::vector<Variant>& all_variants();

struct DataConfig {
  /// Manifest files; empty means the synthetic standard suite keyed on the
  /// master seed.
  std::vector<std::string> manifests;
  std::size_t synth_images = 200;
  double signal_scale = 1.0;
};

struct RunConfig {
  std::uint64_t master_seed = 0;
  Variant variant = Variant::muscle;
  std::string out_dir = "runs/muscle";
  DataConfig data;
  PreprocessConfig preprocess;
  EncoderConfig encoder;
  MoCoConfig moco;
  ScheduleConfig schedule;
  RegConfig reg;
  ClFlags flags;  // used by the muscle variant; muscle_minus turns all off
  FinetuneConfig finetune;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  /// Hex FNV-1a of the canonical JSON without `out_dir`.
  std::string hash() const;
};

/// Manifests resolved and preprocessed for one run.
struct RunData {
  std::vector<DatasetManifest> manifests;
  std::vector<TaskBinding> tasks;       // manifests with a task, in manifest order
  std::vector<Sample> pretrain_pool;    // train splits of every manifest
  std::vector<Sample> foreign_pool;     // train splits of task-free manifests
};

RunData load_run_data(const RunConfig& cfg);

enum class Stage { init = 0, pretrain = 1, cl = 2 };

struct RunArtifacts {
  std::filesystem::path dir;
  std::vector<std::filesystem::path> stage_checkpoints;
  std::vector<std::filesystem::path> task_models;
  std::vector<EvalReport> reports;

  /// Mean over tasks of AUC (classification) or Dice (segmentation).
  double aggregate_score() const;
};

/// Runs the stages the variant calls for. With `resume_from`, stages up to
/// and including the checkpoint's stage are skipped and its backbone is used.
RunArtifacts run_pipeline(const RunConfig& cfg, const std::optional<std::filesystem::path>& resume_from = std::nullopt);

// Individual stages, used by the CLI verbs. Each writes its checkpoint into
// cfg.out_dir and returns the backbone.
ParamVector stage_init(const RunConfig& cfg);
ParamVector stage_pretrain(const RunConfig& cfg, const RunData& data, const ParamVector& init, bool foreign);
ParamVector stage_cl(const RunConfig& cfg, const RunData& data, const ParamVector& backbone);
RunArtifacts stage_finetune(const RunConfig& cfg, const RunData& data, const ParamVector& backbone);
/// Re-evaluates the saved task models of a finished run directory.
std::vector<EvalReport> evaluate_run(const RunConfig& cfg, const RunData& data);

/// Backbone from a checkpoint, validated against the configured encoder, and
/// the stage it came from.
std::pair<ParamVector, Stage> load_stage_checkpoint(const RunConfig& cfg, const std::filesystem::path& path);

struct AblationRow {
  Variant variant;
  std::string task_id;  // "aggregate" for the per-variant aggregate score
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  /// aggregate[variant][seed index]
  std::map<Variant, std::vector<double>> aggregate;
  /// headline[variant][task][seed index]
  std::map<Variant, std::map<std::string, std::vector<double>>> headline;
  std::vector<std::filesystem::path> run_dirs;
};

/// Every variant × seed on base_cfg's data source. Writes per-run
/// directories plus ablation.csv and ablation.txt under base_cfg.out_dir.
AblationResult run_ablation(const RunConfig& base_cfg, const std::vector<std::uint64_t>& seeds,
                            const std::vector<Variant>& variants = all_variants());

}  // namespace muscle
