// SPDX-License-Identifier: Apache-2.0

#include "muscle/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "muscle/checkpoint.hpp"
#include "muscle/errors.hpp"
#include "muscle/manifest_io.hpp"

namespace muscle {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::scratch: return "scratch";
    case Variant::foreign: return "foreign";
    case Variant::md_moco: return "md_moco";
    case Variant::muscle_minus: return "muscle_minus";
    case Variant::muscle: return "muscle";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  for (auto v : all_variants())
    if (to_string(v) == s) return v;
  throw ConfigError("unknown variant '" + s + "'");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::scratch, Variant::foreign, Variant::md_moco, Variant::muscle_minus,
                                      Variant::muscle};
  return v;
}

// ---------------------------------------------------------------------------
// RunConfig <-> JSON

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, _] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

json augment_json(const AugmentFlags& a) {
  return {{"horizontal_flip", a.horizontal_flip}, {"rotation_deg", a.rotation_deg}, {"translate_px", a.translate_px},
          {"random_crop", a.random_crop},         {"gaussian_blur", a.gaussian_blur}, {"color_jitter", a.color_jitter}};
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  json j;
  j["master_seed"] = master_seed;
  j["variant"] = to_string(variant);
  j["out_dir"] = out_dir;
  j["data"] = {{"manifests", data.manifests},
               {"synth_images", data.synth_images},
               {"signal_scale", data.signal_scale}};
  j["preprocess"] = {{"target_h", preprocess.target_h},
                     {"target_w", preprocess.target_w},
                     {"mean", preprocess.mean},
                     {"std", preprocess.std},
                     {"mode", preprocess.mode == NormMode::per_dataset ? "per_dataset" : "global"}};
  json convs = json::array();
  for (const auto& c : encoder.convs) convs.push_back({c.out_channels, c.kernel, c.stride});
  j["encoder"] = {{"in_channels", encoder.in_channels}, {"convs", convs}, {"feature_dim", encoder.feature_dim}};
  j["moco"] = {{"epochs", moco.epochs},
               {"batch", moco.batch},
               {"lr", moco.lr},
               {"lr_min", moco.lr_min},
               {"weight_decay", moco.weight_decay},
               {"momentum", moco.momentum},
               {"temperature", moco.temperature},
               {"queue_size", moco.queue_size},
               {"half_cycle", moco.half_cycle},
               {"augment", augment_json(moco.augment)},
               {"seed", moco.seed}};
  j["schedule"] = {{"rounds", schedule.rounds},         {"lr_max", schedule.lr_max},
                   {"lr_min", schedule.lr_min},         {"period", schedule.period},
                   {"half_cycle", schedule.half_cycle}, {"batch", schedule.batch},
                   {"weight_decay", schedule.weight_decay}, {"seed", schedule.seed}};
  j["reg"] = {{"alpha", reg.alpha}, {"lambda", reg.lambda}};
  j["flags"] = {{"reshuffle", flags.reshuffle}, {"cyclic_lr", flags.cyclic_lr}, {"l2sp", flags.l2sp}};
  j["finetune"] = {{"epochs", finetune.epochs},
                   {"base_lr", finetune.base_lr},
                   {"weight_decay", finetune.weight_decay},
                   {"step_size", finetune.step_size},
                   {"gamma", finetune.gamma},
                   {"batch", finetune.batch},
                   {"threshold", finetune.threshold},
                   {"bootstrap_trials", finetune.bootstrap_trials},
                   {"seed", finetune.seed}};
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    reject_unknown(j, {"master_seed", "variant", "out_dir", "data", "preprocess", "encoder", "moco", "schedule", "reg",
                       "flags", "finetune"},
                   "config");
    read(j, "master_seed", c.master_seed);
    if (j.contains("variant")) c.variant = variant_from_string(j["variant"].get<std::string>());
    read(j, "out_dir", c.out_dir);
    if (j.contains("data")) {
      const auto& d = j["data"];
      reject_unknown(d, {"manifests", "synth_images", "signal_scale"}, "data");
      read(d, "manifests", c.data.manifests);
      read(d, "synth_images", c.data.synth_images);
      read(d, "signal_scale", c.data.signal_scale);
    }
    if (j.contains("preprocess")) {
      const auto& p = j["preprocess"];
      reject_unknown(p, {"target_h", "target_w", "mean", "std", "mode"}, "preprocess");
      read(p, "target_h", c.preprocess.target_h);
      read(p, "target_w", c.preprocess.target_w);
      read(p, "mean", c.preprocess.mean);
      read(p, "std", c.preprocess.std);
      if (p.contains("mode")) {
        const auto m = p["mode"].get<std::string>();
        if (m == "per_dataset")
          c.preprocess.mode = NormMode::per_dataset;
        else if (m == "global")
          c.preprocess.mode = NormMode::global;
        else
          throw ConfigError("preprocess.mode must be per_dataset or global");
      }
    }
    if (j.contains("encoder")) {
      const auto& e = j["encoder"];
      reject_unknown(e, {"in_channels", "convs", "feature_dim"}, "encoder");
      read(e, "in_channels", c.encoder.in_channels);
      read(e, "feature_dim", c.encoder.feature_dim);
      if (e.contains("convs")) {
        c.encoder.convs.clear();
        for (const auto& cv : e["convs"]) {
          const auto v = cv.get<std::vector<std::size_t>>();
          if (v.size() != 3) throw ConfigError("encoder.convs entries are [out_channels, kernel, stride]");
          c.encoder.convs.push_back({v[0], v[1], v[2]});
        }
      }
    }
    if (j.contains("moco")) {
      const auto& m = j["moco"];
      reject_unknown(m, {"epochs", "batch", "lr", "lr_min", "weight_decay", "momentum", "temperature", "queue_size",
                         "half_cycle", "augment", "seed"},
                     "moco");
      read(m, "epochs", c.moco.epochs);
      read(m, "batch", c.moco.batch);
      read(m, "lr", c.moco.lr);
      read(m, "lr_min", c.moco.lr_min);
      read(m, "weight_decay", c.moco.weight_decay);
      read(m, "momentum", c.moco.momentum);
      read(m, "temperature", c.moco.temperature);
      read(m, "queue_size", c.moco.queue_size);
      read(m, "half_cycle", c.moco.half_cycle);
      read(m, "seed", c.moco.seed);
      if (m.contains("augment")) {
        const auto& a = m["augment"];
        reject_unknown(a, {"horizontal_flip", "rotation_deg", "translate_px", "random_crop", "gaussian_blur",
                           "color_jitter"},
                       "moco.augment");
        read(a, "horizontal_flip", c.moco.augment.horizontal_flip);
        read(a, "rotation_deg", c.moco.augment.rotation_deg);
        read(a, "translate_px", c.moco.augment.translate_px);
        read(a, "random_crop", c.moco.augment.random_crop);
        read(a, "gaussian_blur", c.moco.augment.gaussian_blur);
        read(a, "color_jitter", c.moco.augment.color_jitter);
      }
    }
    if (j.contains("schedule")) {
      const auto& s = j["schedule"];
      reject_unknown(s, {"rounds", "lr_max", "lr_min", "period", "half_cycle", "batch", "weight_decay", "seed"},
                     "schedule");
      read(s, "rounds", c.schedule.rounds);
      read(s, "lr_max", c.schedule.lr_max);
      read(s, "lr_min", c.schedule.lr_min);
      read(s, "period", c.schedule.period);
      read(s, "half_cycle", c.schedule.half_cycle);
      read(s, "batch", c.schedule.batch);
      read(s, "weight_decay", c.schedule.weight_decay);
      read(s, "seed", c.schedule.seed);
    }
    if (j.contains("reg")) {
      const auto& r = j["reg"];
      reject_unknown(r, {"alpha", "lambda"}, "reg");
      read(r, "alpha", c.reg.alpha);
      read(r, "lambda", c.reg.lambda);
    }
    if (j.contains("flags")) {
      const auto& f = j["flags"];
      reject_unknown(f, {"reshuffle", "cyclic_lr", "l2sp"}, "flags");
      read(f, "reshuffle", c.flags.reshuffle);
      read(f, "cyclic_lr", c.flags.cyclic_lr);
      read(f, "l2sp", c.flags.l2sp);
    }
    if (j.contains("finetune")) {
      const auto& f = j["finetune"];
      reject_unknown(f, {"epochs", "base_lr", "weight_decay", "step_size", "gamma", "batch", "threshold",
                         "bootstrap_trials", "seed"},
                     "finetune");
      read(f, "epochs", c.finetune.epochs);
      read(f, "base_lr", c.finetune.base_lr);
      read(f, "weight_decay", c.finetune.weight_decay);
      read(f, "step_size", c.finetune.step_size);
      read(f, "gamma", c.finetune.gamma);
      read(f, "batch", c.finetune.batch);
      read(f, "threshold", c.finetune.threshold);
      read(f, "bootstrap_trials", c.finetune.bootstrap_trials);
      read(f, "seed", c.finetune.seed);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void RunConfig::validate() const {
  try {
    encoder.validate();
    if (encoder.input_h != preprocess.target_h || encoder.input_w != preprocess.target_w) {
      EncoderConfig e = encoder;
      e.input_h = preprocess.target_h;
      e.input_w = preprocess.target_w;
      e.validate();
    }
    if (preprocess.target_h == 0 || preprocess.target_w == 0) throw ContractError("preprocess target must be >= 1");
    if (!(preprocess.std > 0.0)) throw ContractError("preprocess.std must be > 0");
    moco.validate();
    schedule.validate();
    reg.validate();
    finetune.validate();
    if (data.manifests.empty() && data.synth_images < 10) throw ContractError("data.synth_images must be >= 10");
    if (!(data.signal_scale > 0.0)) throw ContractError("data.signal_scale must be > 0");
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
}

std::string RunConfig::hash() const {
  json j = to_json();
  j.erase("out_dir");
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(j.dump());
  return os.str();
}

// ---------------------------------------------------------------------------
// Data

namespace {

EncoderConfig effective_encoder(const RunConfig& cfg) {
  EncoderConfig e = cfg.encoder;
  e.input_h = cfg.preprocess.target_h;
  e.input_w = cfg.preprocess.target_w;
  return e;
}

std::uint64_t stage_seed(const RunConfig& cfg, const char* stage, std::uint64_t sub_seed) {
  return derive_seed(cfg.master_seed, {fnv1a(stage), sub_seed});
}

fs::path ckpt_dir(const RunConfig& cfg) { return fs::path(cfg.out_dir) / "checkpoints"; }

CheckpointInfo info_for(const RunConfig& cfg, const std::string& what) { return {1, what, cfg.hash()}; }

template <typename Fn>
auto in_stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

void write_config(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  std::ofstream out(fs::path(cfg.out_dir) / "config.json");
  if (!out) throw IoError("cannot write config.json in " + cfg.out_dir);
  json j = cfg.to_json();
  j["config_hash"] = cfg.hash();
  out << j.dump(2) << '\n';
}

}  // namespace

RunData load_run_data(const RunConfig& cfg) {
  RunData d;
  if (cfg.data.manifests.empty()) {
    StandardSuiteOptions opts;
    opts.images_per_dataset = cfg.data.synth_images;
    opts.signal_scale = cfg.data.signal_scale;
    d.manifests = standard_suite(cfg.master_seed, opts);
  } else {
    for (const auto& p : cfg.data.manifests) {
      if (!fs::exists(p)) throw IoError("manifest not found: " + p);
      d.manifests.push_back(read_manifest(p));
    }
  }
  std::vector<DatasetManifest> task_free;
  for (const auto& m : d.manifests) {
    if (m.task) {
      TaskBinding t;
      t.task_id = m.dataset_id;
      t.head = *m.task;
      t.train = prepare_split(m, m.splits.train, cfg.preprocess);
      t.val = prepare_split(m, m.splits.val, cfg.preprocess);
      t.test = prepare_split(m, m.splits.test, cfg.preprocess);
      d.tasks.push_back(std::move(t));
    } else {
      task_free.push_back(m);
    }
  }
  const auto pool_seed = derive_seed(cfg.master_seed, {fnv1a("pool")});
  d.pretrain_pool = aggregate(d.manifests, cfg.preprocess, pool_seed);
  if (!task_free.empty()) d.foreign_pool = aggregate(task_free, cfg.preprocess, pool_seed);
  return d;
}

// ---------------------------------------------------------------------------
// Stages

ParamVector stage_init(const RunConfig& cfg) {
  return in_stage("init", [&] {
    auto rng = make_rng(stage_seed(cfg, "init", 0));
    ParamVector p = init_encoder(effective_encoder(cfg), rng);
    save_checkpoint(p, ckpt_dir(cfg) / "stage0_init.ckpt", info_for(cfg, "stage0_init"));
    return p;
  });
}

ParamVector stage_pretrain(const RunConfig& cfg, const RunData& data, const ParamVector& init, bool foreign) {
  return in_stage("pretrain", [&] {
    const auto& pool = foreign ? data.foreign_pool : data.pretrain_pool;
    if (pool.empty()) throw ContractError(foreign ? "no task-free manifests for foreign pre-training" : "empty pool");
    MoCoConfig mc = cfg.moco;
    mc.seed = stage_seed(cfg, "moco", cfg.moco.seed);
    auto res = md_moco_pretrain(pool, effective_encoder(cfg), mc, init);
    fs::create_directories(ckpt_dir(cfg));
    write_loss_trace_csv(res.trace, ckpt_dir(cfg) / "stage1_loss.csv");
    save_checkpoint(res.backbone, ckpt_dir(cfg) / "stage1_pretrain.ckpt", info_for(cfg, "stage1_pretrain"));
    return res.backbone;
  });
}

namespace {
ClFlags flags_for(const RunConfig& cfg) {
  return cfg.variant == Variant::muscle_minus ? ClFlags::all_off() : cfg.flags;
}
}  // namespace

ParamVector stage_cl(const RunConfig& cfg, const RunData& data, const ParamVector& backbone) {
  return in_stage("cl", [&] {
    ScheduleConfig sc = cfg.schedule;
    sc.seed = stage_seed(cfg, "cl", cfg.schedule.seed);
    auto res = cl_train(backbone, effective_encoder(cfg), data.tasks, sc, cfg.reg, flags_for(cfg));
    fs::create_directories(ckpt_dir(cfg));
    write_cl_trace_csv(res.trace, ckpt_dir(cfg) / "stage2_trace.csv");
    save_checkpoint(res.backbone, ckpt_dir(cfg) / "stage2_cl.ckpt", info_for(cfg, "stage2_cl"));
    return res.backbone;
  });
}

namespace {

FinetuneConfig finetune_cfg(const RunConfig& cfg) {
  FinetuneConfig fc = cfg.finetune;
  fc.seed = stage_seed(cfg, "finetune", cfg.finetune.seed);
  return fc;
}

void write_metrics(const RunConfig& cfg, const std::vector<EvalReport>& reports) {
  std::ofstream out(fs::path(cfg.out_dir) / "metrics.csv");
  if (!out) throw IoError("cannot write metrics.csv in " + cfg.out_dir);
  out.precision(17);
  out << "task_id,kind,metric,value\n";
  for (const auto& r : reports)
    for (const auto& [k, v] : r.metrics) {
      out << r.task_id << ',' << to_string(r.kind) << ',' << k << ',';
      if (v)
        out << *v;
      else
        out << "NA";
      out << '\n';
    }
}

}  // namespace

RunArtifacts stage_finetune(const RunConfig& cfg, const RunData& data, const ParamVector& backbone) {
  return in_stage("finetune", [&] {
    if (data.tasks.empty()) throw ContractError("no task-bound manifests to fine-tune on");
    RunArtifacts art;
    art.dir = cfg.out_dir;
    const auto enc = effective_encoder(cfg);
    const auto fc = finetune_cfg(cfg);
    const fs::path out = cfg.out_dir;
    fs::create_directories(out / "models");
    fs::create_directories(out / "reports");
    fs::create_directories(out / "roc");
    for (const auto& task : data.tasks) {
      auto res = finetune_task(backbone, task, enc, fc);
      const auto model_path = out / "models" / (task.task_id + ".ckpt");
      save_checkpoint(res.model.merged(), model_path, info_for(cfg, "stage3_" + task.task_id));
      write_report_json(res.report, out / "reports" / (task.task_id + ".json"));
      if (task.head.kind == HeadKind::classification)
        write_roc_csv(res.model, task, enc, out / "roc" / (task.task_id + ".csv"));
      art.task_models.push_back(model_path);
      art.reports.push_back(std::move(res.report));
    }
    write_metrics(cfg, art.reports);
    return art;
  });
}

std::vector<EvalReport> evaluate_run(const RunConfig& cfg, const RunData& data) {
  return in_stage("eval", [&] {
    const auto enc = effective_encoder(cfg);
    const auto fc = finetune_cfg(cfg);
    std::vector<EvalReport> reports;
    for (const auto& task : data.tasks) {
      const auto path = fs::path(cfg.out_dir) / "models" / (task.task_id + ".ckpt");
      auto loaded = load_checkpoint(path, cfg.hash());
      for (const auto& w : loaded.warnings) std::cerr << "warning: " << path.string() << ": " << w << '\n';
      TaskModel m;
      m.task_id = task.task_id;
      m.head_cfg = task.head;
      m.backbone = loaded.params.subset("enc.");
      m.head = loaded.params.subset("head.");
      auto rng = make_rng(0);
      if (!m.backbone.same_template(init_encoder(enc, rng)))
        throw FormatError("shapes", "model backbone does not match the configured encoder");
      reports.push_back(evaluate_task(m, task, enc, fc));
    }
    write_metrics(cfg, reports);
    return reports;
  });
}

std::pair<ParamVector, Stage> load_stage_checkpoint(const RunConfig& cfg, const fs::path& path) {
  auto rng = make_rng(0);
  const auto templ = init_encoder(effective_encoder(cfg), rng);
  auto loaded = load_checkpoint(path, templ, cfg.hash());
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << path.string() << ": " << w << '\n';
  const auto& by = loaded.info.created_by;
  Stage stage;
  if (by == "stage0_init")
    stage = Stage::init;
  else if (by == "stage1_pretrain")
    stage = Stage::pretrain;
  else if (by == "stage2_cl")
    stage = Stage::cl;
  else
    throw FormatError("created_by", "'" + by + "' is not a resumable stage checkpoint");
  return {std::move(loaded.params), stage};
}

double RunArtifacts::aggregate_score() const {
  if (reports.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : reports) s += r.headline();
  return s / static_cast<double>(reports.size());
}

RunArtifacts run_pipeline(const RunConfig& cfg, const std::optional<fs::path>& resume_from) {
  cfg.validate();
  write_config(cfg);
  const RunData data = in_stage("data", [&] { return load_run_data(cfg); });

  const bool pretrain = cfg.variant != Variant::scratch;
  const bool cl = cfg.variant == Variant::muscle || cfg.variant == Variant::muscle_minus;

  std::vector<fs::path> stages;
  ParamVector backbone;
  Stage done = Stage::init;
  bool have = false;
  if (resume_from) {
    auto [p, st] = in_stage("resume", [&] { return load_stage_checkpoint(cfg, *resume_from); });
    backbone = std::move(p);
    done = st;
    have = true;
  }
  if (!have) {
    backbone = stage_init(cfg);
    stages.push_back(ckpt_dir(cfg) / "stage0_init.ckpt");
  }
  if (pretrain && (!have || done < Stage::pretrain)) {
    backbone = stage_pretrain(cfg, data, backbone, cfg.variant == Variant::foreign);
    stages.push_back(ckpt_dir(cfg) / "stage1_pretrain.ckpt");
  }
  if (cl && (!have || done < Stage::cl)) {
    backbone = stage_cl(cfg, data, backbone);
    stages.push_back(ckpt_dir(cfg) / "stage2_cl.ckpt");
  }
  RunArtifacts art = stage_finetune(cfg, data, backbone);
  art.stage_checkpoints = std::move(stages);
  return art;
}

// ---------------------------------------------------------------------------
// Ablation

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0};
}

}  // namespace

AblationResult run_ablation(const RunConfig& base_cfg, const std::vector<std::uint64_t>& seeds,
                            const std::vector<Variant>& variants) {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  AblationResult res;
  // metrics[variant][task][metric] -> values over seeds
  std::map<Variant, std::map<std::string, std::map<std::string, std::vector<double>>>> metrics;
  for (auto v : variants) {
    for (auto seed : seeds) {
      RunConfig cfg = base_cfg;
      cfg.variant = v;
      cfg.master_seed = seed;
      cfg.out_dir = (fs::path(base_cfg.out_dir) / (to_string(v) + "_seed" + std::to_string(seed))).string();
      const auto art = run_pipeline(cfg);
      res.run_dirs.push_back(cfg.out_dir);
      res.aggregate[v].push_back(art.aggregate_score());
      for (const auto& r : art.reports) {
        res.headline[v][r.task_id].push_back(r.headline());
        for (const auto& [k, val] : r.metrics)
          if (val) metrics[v][r.task_id][k].push_back(*val);
      }
    }
  }
  for (auto v : variants) {
    for (const auto& [task, ms] : metrics[v])
      for (const auto& [k, vals] : ms) {
        auto [m, s] = mean_std(vals);
        res.rows.push_back({v, task, k, m, s, vals.size()});
      }
    auto [m, s] = mean_std(res.aggregate[v]);
    res.rows.push_back({v, "aggregate", "score", m, s, res.aggregate[v].size()});
  }

  const fs::path out = base_cfg.out_dir;
  fs::create_directories(out);
  {
    std::ofstream csv(out / "ablation.csv");
    if (!csv) throw IoError("cannot write ablation.csv");
    csv.precision(17);
    csv << "variant,task_id,metric,mean,std,n\n";
    for (const auto& r : res.rows)
      csv << to_string(r.variant) << ',' << r.task_id << ',' << r.metric << ',' << r.mean << ',' << r.std << ','
          << r.n << '\n';
  }
  {
    // One line per (variant, task); metric columns as in a results table.
    std::ofstream txt(out / "ablation.txt");
    if (!txt) throw IoError("cannot write ablation.txt");
    std::map<std::pair<Variant, std::string>, std::vector<const AblationRow*>> lines;
    std::vector<std::pair<Variant, std::string>> keys;
    for (const auto& r : res.rows) {
      auto key = std::make_pair(r.variant, r.task_id);
      if (!lines.count(key)) keys.push_back(key);
      lines[key].push_back(&r);
    }
    txt << std::left << std::setw(14) << "variant" << std::setw(12) << "task" << "metrics (mean ± std over "
        << seeds.size() << " seeds)\n";
    for (const auto& key : keys) {
      txt << std::left << std::setw(14) << to_string(key.first) << std::setw(12) << key.second;
      for (const auto* r : lines[key]) {
        std::ostringstream cell;
        cell << r->metric << '=' << std::fixed << std::setprecision(4) << r->mean << "±" << r->std;
        txt << std::setw(26) << cell.str();
      }
      txt << '\n';
    }
  }
  return res;
}

}  // namespace muscle
