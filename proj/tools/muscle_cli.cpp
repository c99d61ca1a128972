// SPDX-License-Identifier: Apache-2.0
//
// muscle: command-line front end for the pre-training pipeline.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime or stage error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "muscle/checkpoint.hpp"
#include "muscle/errors.hpp"
#include "muscle/manifest_io.hpp"
#include "muscle/pipeline.hpp"

namespace fs = std::filesystem;
using namespace muscle;

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string variant;
  std::string out;
  std::string resume_from;
};

void add_common(CLI::App* sub, Common& c, bool with_resume) {
  sub->add_option("--config", c.config, "RunConfig JSON file");
  sub->add_option("--seed", c.seed, "master seed (overrides the config)");
  sub->add_option("--variant", c.variant, "scratch | foreign | md_moco | muscle_minus | muscle");
  sub->add_option("--out", c.out, "output directory (overrides the config)");
  if (with_resume) sub->add_option("--resume-from", c.resume_from, "stage checkpoint to continue from");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : RunConfig::load(c.config);
  if (c.seed) cfg.master_seed = *c.seed;
  if (!c.variant.empty()) cfg.variant = variant_from_string(c.variant);
  if (!c.out.empty()) cfg.out_dir = c.out;
  cfg.validate();
  return cfg;
}

void print_reports(const std::vector<EvalReport>& reports) {
  for (const auto& r : reports) {
    std::cout << r.task_id;
    for (const auto& [k, v] : r.metrics) {
      std::cout << ' ' << k << '=';
      if (v)
        std::cout << *v;
      else
        std::cout << "NA";
    }
    std::cout << '\n';
  }
}

/// Backbone to continue from: --resume-from if given, else the named stage
/// checkpoint inside the run directory.
ParamVector backbone_from(const RunConfig& cfg, const Common& c, const char* fallback) {
  fs::path p = c.resume_from.empty() ? fs::path(cfg.out_dir) / "checkpoints" / fallback : fs::path(c.resume_from);
  if (!fs::exists(p)) throw IoError("checkpoint not found: " + p.string() + " (pass --resume-from)");
  return load_stage_checkpoint(cfg, p).first;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-dataset contrastive pre-training with continual multi-task learning"};
  app.require_subcommand(1);

  Common c;
  std::string seeds_arg;
  std::size_t synth_images = 0;

  auto* synth = app.add_subcommand("synth", "write the synthetic standard suite as manifests");
  add_common(synth, c, false);
  synth->add_option("--images", synth_images, "images per dataset");
  auto* pretrain = app.add_subcommand("pretrain", "Kaiming init then contrastive pre-training");
  add_common(pretrain, c, true);
  auto* cl = app.add_subcommand("cl", "continual multi-task stage");
  add_common(cl, c, true);
  auto* finetune = app.add_subcommand("finetune", "per-task fine-tuning and evaluation");
  add_common(finetune, c, true);
  auto* eval = app.add_subcommand("eval", "re-evaluate the saved task models of a run");
  add_common(eval, c, false);
  auto* run = app.add_subcommand("run", "full pipeline for the configured variant");
  add_common(run, c, true);
  auto* ablate = app.add_subcommand("ablate", "every variant over several seeds");
  add_common(ablate, c, false);
  ablate->add_option("--seeds", seeds_arg, "comma-separated seeds (default 0,1,2,3,4)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    RunConfig cfg = resolve(c);

    if (synth->parsed()) {
      StandardSuiteOptions opts;
      opts.images_per_dataset = synth_images ? synth_images : cfg.data.synth_images;
      opts.signal_scale = cfg.data.signal_scale;
      const auto suite = standard_suite(cfg.master_seed, opts);
      fs::create_directories(cfg.out_dir);
      for (const auto& m : suite) {
        const auto p = fs::path(cfg.out_dir) / (m.dataset_id + ".json");
        write_manifest(m, p);
        std::cout << p.string() << '\n';
      }
    } else if (pretrain->parsed()) {
      const auto data = load_run_data(cfg);
      ParamVector init = c.resume_from.empty() ? stage_init(cfg) : backbone_from(cfg, c, "");
      stage_pretrain(cfg, data, init, cfg.variant == Variant::foreign);
      std::cout << (fs::path(cfg.out_dir) / "checkpoints" / "stage1_pretrain.ckpt").string() << '\n';
    } else if (cl->parsed()) {
      const auto data = load_run_data(cfg);
      stage_cl(cfg, data, backbone_from(cfg, c, "stage1_pretrain.ckpt"));
      std::cout << (fs::path(cfg.out_dir) / "checkpoints" / "stage2_cl.ckpt").string() << '\n';
    } else if (finetune->parsed()) {
      const auto data = load_run_data(cfg);
      const auto art = stage_finetune(cfg, data, backbone_from(cfg, c, "stage2_cl.ckpt"));
      print_reports(art.reports);
    } else if (eval->parsed()) {
      const auto data = load_run_data(cfg);
      print_reports(evaluate_run(cfg, data));
    } else if (run->parsed()) {
      std::optional<fs::path> resume;
      if (!c.resume_from.empty()) resume = c.resume_from;
      const auto art = run_pipeline(cfg, resume);
      print_reports(art.reports);
      std::cout << "aggregate " << art.aggregate_score() << '\n';
    } else if (ablate->parsed()) {
      std::vector<std::uint64_t> seeds;
      if (seeds_arg.empty()) {
        seeds = {0, 1, 2, 3, 4};
      } else {
        std::stringstream ss(seeds_arg);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
          try {
            seeds.push_back(std::stoull(tok));
          } catch (const std::exception&) {
            throw ConfigError("--seeds: '" + tok + "' is not a seed");
          }
        }
      }
      std::vector<Variant> variants = all_variants();
      if (!c.variant.empty()) variants = {cfg.variant};
      const auto res = run_ablation(cfg, seeds, variants);
      for (auto v : variants) {
        double m = 0.0;
        for (double x : res.aggregate.at(v)) m += x;
        std::cout << to_string(v) << " aggregate " << m / static_cast<double>(res.aggregate.at(v).size()) << '\n';
      }
      std::cout << (fs::path(cfg.out_dir) / "ablation.txt").string() << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
