// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "muscle/errors.hpp"
#include "muscle/finetune.hpp"
#include "muscle/synth.hpp"
#include "support.hpp"

using namespace muscle;
using namespace muscle::testing;
namespace fs = std::filesystem;

namespace {

struct Instance {
  std::vector<double> scores;
  std::vector<int> labels;
};

// Both classes guaranteed; `coarse` draws scores from a small grid so ties occur.
Instance random_instance(Rng& rng, std::size_t n, bool coarse) {
  Instance in;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> grid(0, 5);
  for (std::size_t i = 0; i < n; ++i) {
    in.labels.push_back(i == 0 ? 0 : i == 1 ? 1 : static_cast<int>(u(rng) < 0.5));
    const double shift = in.labels.back() ? 0.2 : 0.0;
    in.scores.push_back(coarse ? grid(rng) / 5.0 + shift : u(rng) + shift);
  }
  return in;
}

double brute_force_auc(const Instance& in) {
  std::uint64_t twice = 0, pairs = 0;
  for (std::size_t i = 0; i < in.scores.size(); ++i)
    for (std::size_t j = 0; j < in.scores.size(); ++j) {
      if (in.labels[i] != 1 || in.labels[j] != 0) continue;
      ++pairs;
      if (in.scores[i] > in.scores[j])
        twice += 2;
      else if (in.scores[i] == in.scores[j])
        twice += 1;
    }
  return static_cast<double>(twice) / static_cast<double>(2 * pairs);
}

std::vector<int> random_mask(Rng& rng, std::size_t n, double p) {
  std::bernoulli_distribution b(p);
  std::vector<int> m(n);
  for (auto& v : m) v = b(rng);
  return m;
}

EncoderConfig small_encoder() {
  EncoderConfig e;
  e.convs = {{4, 3, 2}, {8, 3, 2}};
  e.feature_dim = 8;
  e.input_h = e.input_w = 16;
  return e;
}

std::vector<TaskBinding> small_tasks(std::uint64_t seed) {
  StandardSuiteOptions opts;
  opts.images_per_dataset = 40;
  PreprocessConfig pp;
  pp.target_h = pp.target_w = 16;
  std::vector<TaskBinding> tasks;
  for (const auto& m : standard_suite(seed, opts)) {
    if (!m.task) continue;
    tasks.push_back({m.dataset_id, *m.task, prepare_split(m, m.splits.train, pp), prepare_split(m, m.splits.val, pp),
                     prepare_split(m, m.splits.test, pp)});
  }
  return tasks;
}

FinetuneConfig quick_config() {
  FinetuneConfig f;
  f.epochs = 2;
  f.base_lr = 0.05;
  f.batch = 8;
  f.bootstrap_trials = 20;
  return f;
}

}  // namespace

TEST_CASE("classification metric examples") {
  {
    const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
    const std::vector<int> l{1, 1, 0, 0};
    const auto m = classification_metrics(s, l, 0.5);
    CHECK(*m.acc == 1.0);
    CHECK(*m.sen == 1.0);
    CHECK(*m.spe == 1.0);
  }
  {
    const std::vector<double> s{0.9, 0.9, 0.9, 0.9};
    const std::vector<int> l{1, 0, 1, 0};
    const auto m = classification_metrics(s, l, 0.5);
    CHECK(*m.acc == 0.5);
    CHECK(*m.sen == 1.0);
    CHECK(*m.spe == 0.0);
  }
  {
    // No negatives: specificity is undefined rather than 0.
    const std::vector<double> s{0.9, 0.2};
    const std::vector<int> l{1, 1};
    const auto m = classification_metrics(s, l, 0.5);
    CHECK(*m.sen == 0.5);
    CHECK_FALSE(m.spe.has_value());
  }
  const std::vector<double> s3{0.1, 0.2, 0.3};
  CHECK_THROWS_AS(classification_metrics(s3, std::vector<int>{1, 0}, 0.5), ContractError);
  CHECK_THROWS_AS(classification_metrics(s3, std::vector<int>{1, 0, 2}, 0.5), ContractError);
}

TEST_CASE("AUC examples and errors") {
  const std::vector<int> l{1, 1, 0, 0};
  CHECK(auc_mann_whitney(std::vector<double>{0.9, 0.8, 0.3, 0.1}, l) == 1.0);
  CHECK(auc_mann_whitney(std::vector<double>{0.1, 0.2, 0.3, 0.4}, l) == 0.0);
  CHECK(auc_mann_whitney(std::vector<double>{0.5, 0.5, 0.5, 0.5}, l) == 0.5);
  CHECK_THROWS_AS(auc_mann_whitney(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), UndefinedMetricError);
}

TEST_CASE("AUC equals brute-force pair enumeration") {
  auto rng = make_rng(31);
  for (int i = 0; i < 50; ++i) {
    const auto in = random_instance(rng, 5 + static_cast<std::size_t>(i) * 3, i % 2 == 0);
    CHECK(auc_mann_whitney(in.scores, in.labels) == brute_force_auc(in));
  }
}

TEST_CASE("AUC is invariant under strictly monotone score transforms") {
  auto rng = make_rng(32);
  for (int i = 0; i < 20; ++i) {
    const auto in = random_instance(rng, 40, i % 2 == 0);
    std::vector<double> t(in.scores.size());
    std::transform(in.scores.begin(), in.scores.end(), t.begin(), [](double s) { return std::exp(3.0 * s) - 7.0; });
    CHECK(auc_mann_whitney(t, in.labels) == auc_mann_whitney(in.scores, in.labels));
  }
}

TEST_CASE("best-threshold accuracy beats the majority class") {
  auto rng = make_rng(33);
  for (int i = 0; i < 20; ++i) {
    const auto in = random_instance(rng, 30, false);
    const auto pos = static_cast<std::size_t>(std::count(in.labels.begin(), in.labels.end(), 1));
    const double majority = static_cast<double>(std::max(pos, 30 - pos)) / 30.0;
    double best = 0.0;
    std::vector<double> thresholds = in.scores;
    thresholds.push_back(1e9);  // everything negative
    for (double t : thresholds) best = std::max(best, *classification_metrics(in.scores, in.labels, t).acc);
    CHECK(best >= majority);
  }
}

TEST_CASE("bootstrap CI is deterministic and brackets the point estimate") {
  auto rng = make_rng(34);
  for (int i = 0; i < 10; ++i) {
    const auto in = random_instance(rng, 60, i % 3 == 0);
    const double auc = auc_mann_whitney(in.scores, in.labels);
    const auto a = bootstrap_auc_ci(in.scores, in.labels, 100, 0.95, 7);
    const auto b = bootstrap_auc_ci(in.scores, in.labels, 100, 0.95, 7);
    CHECK(a.low == b.low);
    CHECK(a.high == b.high);
    CHECK(a.low <= auc);
    CHECK(auc <= a.high);
  }
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  const std::vector<int> l{1, 1, 0, 0};
  const auto perfect = bootstrap_auc_ci(s, l, 100, 0.95, 1);
  CHECK(perfect.low == 1.0);
  CHECK(perfect.high == 1.0);
}

TEST_CASE("bootstrap degenerate instance gives up") {
  // One positive in 40: with no redraws allowed some trial loses it.
  std::vector<double> s(40, 0.3);
  std::vector<int> l(40, 0);
  s[0] = 0.9;
  l[0] = 1;
  CHECK_THROWS_AS(bootstrap_auc_ci(s, l, 100, 0.95, 0, 0), UndefinedMetricError);
  CHECK_NOTHROW(bootstrap_auc_ci(s, l, 100, 0.95, 0, 1000));
}

TEST_CASE("percentile interpolation") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0, 5.0};
  CHECK(percentile_sorted(v, 0.0) == 1.0);
  CHECK(percentile_sorted(v, 1.0) == 5.0);
  CHECK(percentile_sorted(v, 0.5) == 3.0);
  CHECK(percentile_sorted(v, 0.125) == doctest::Approx(1.5));
}

TEST_CASE("segmentation metric examples") {
  std::vector<int> sq(16, 0), left(16, 0), top(16, 0);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      if (x < 2) left[y * 4 + x] = 1;
      if (y < 2) top[y * 4 + x] = 1;
    }
  const auto same = segmentation_metrics(left, left, 2);
  CHECK(*same.dice == 1.0);
  CHECK(same.miou == 1.0);
  CHECK(*segmentation_metrics(left, top, 2).dice == 0.5);
  std::vector<int> right(16);
  for (std::size_t i = 0; i < 16; ++i) right[i] = 1 - left[i];
  CHECK(*segmentation_metrics(left, right, 2).dice == 0.0);
  // Empty prediction and truth: Dice undefined, background IoU 1.
  const auto empty = segmentation_metrics(sq, sq, 2);
  CHECK_FALSE(empty.dice.has_value());
  CHECK(empty.miou == 1.0);
  // Label 2 absent from both masks is left out of the mean.
  CHECK(segmentation_metrics(left, left, 3).miou == 1.0);
  CHECK_THROWS_AS(segmentation_metrics(left, std::vector<int>(15, 0), 2), ContractError);
  CHECK_THROWS_AS(segmentation_metrics(left, std::vector<int>(16, 5), 2), IndexError);
}

TEST_CASE("Dice and foreground IoU are linked") {
  auto rng = make_rng(35);
  for (int i = 0; i < 50; ++i) {
    const double p = 0.1 + 0.8 * (i / 50.0);
    const auto a = random_mask(rng, 256, p);
    const auto b = random_mask(rng, 256, 1.0 - p);
    const auto m = segmentation_metrics(a, b, 2);
    const double iou = *m.foreground_iou;
    CHECK(std::abs(*m.dice - 2.0 * iou / (1.0 + iou)) < 1e-12);
  }
}

TEST_CASE("ROC points") {
  const std::vector<double> s{0.9, 0.8, 0.8, 0.1};
  const std::vector<int> l{1, 0, 1, 0};
  const auto r = roc_points(s, l);
  REQUIRE(r.size() == 4);
  CHECK(r[0].fpr == 0.0);
  CHECK(r[0].tpr == 0.0);
  CHECK(r[1].tpr == 0.5);
  CHECK(r[2].fpr == 0.5);
  CHECK(r[2].tpr == 1.0);
  CHECK(r[3].fpr == 1.0);
}

TEST_CASE("step decay schedule") {
  FinetuneConfig f;
  f.base_lr = 0.1;
  f.step_size = 2;
  f.gamma = 0.5;
  const double expect[] = {0.1, 0.1, 0.05, 0.05, 0.025};
  for (std::size_t e = 0; e < 5; ++e) CHECK(f.lr_at(e) == doctest::Approx(expect[e]).epsilon(1e-15));
  f.gamma = 0.0;
  CHECK_THROWS_AS(f.validate(), ContractError);
  f.gamma = 0.5;
  f.step_size = 0;
  CHECK_THROWS_AS(f.validate(), ContractError);
}

TEST_CASE("zero epochs leaves the model at its initialization") {
  const auto enc = small_encoder();
  const auto tasks = small_tasks(1);
  auto rng = make_rng(1);
  const auto bb = init_encoder(enc, rng);
  auto f = quick_config();
  f.epochs = 0;
  for (const auto& t : tasks) {
    const auto res = finetune_task(bb, t, enc, f);
    CHECK(res.model.backbone == bb);
    CHECK(res.model.head == init_task_head(t.head, enc, f.seed, t.task_id));
    CHECK(res.report.n_test == t.test.size());
    if (t.head.kind == HeadKind::classification) {
      CHECK(res.report.metrics.count("auc"));
      CHECK(res.report.metrics.count("auc_ci_low"));
    } else {
      CHECK(res.report.metrics.count("dice"));
      CHECK(res.report.metrics.count("miou"));
    }
  }
}

TEST_CASE("fine-tuning one task leaves other models and the input alone") {
  const auto enc = small_encoder();
  const auto tasks = small_tasks(2);
  auto rng = make_rng(2);
  const auto bb = init_encoder(enc, rng);
  const auto bb_copy = bb;
  const auto f = quick_config();
  const auto b = finetune_task(bb, tasks[1], enc, f);
  const auto before = evaluate_task(b.model, tasks[1], enc, f);
  const auto a = finetune_task(bb, tasks[0], enc, f);
  CHECK(bb == bb_copy);
  CHECK_FALSE(a.model.backbone == bb);
  const auto after = evaluate_task(b.model, tasks[1], enc, f);
  CHECK(before.metrics == after.metrics);
  // Independent of what else ran first.
  CHECK(finetune_task(bb, tasks[1], enc, f).model.backbone == b.model.backbone);
}

TEST_CASE("report invariants") {
  const auto enc = small_encoder();
  const auto tasks = small_tasks(3);
  auto rng = make_rng(3);
  const auto bb = init_encoder(enc, rng);
  const auto f = quick_config();
  for (const auto& t : tasks) {
    const auto r = finetune_task(bb, t, enc, f).report;
    for (const auto& [k, v] : r.metrics)
      if (v) {
        CHECK(*v >= 0.0);
        CHECK(*v <= 1.0);
      }
    if (r.kind == HeadKind::classification && r.metrics.at("auc")) {
      CHECK(*r.metrics.at("auc_ci_low") <= *r.metrics.at("auc"));
      CHECK(*r.metrics.at("auc") <= *r.metrics.at("auc_ci_high"));
      CHECK(r.headline() == *r.metrics.at("auc"));
    }
    const auto j = r.to_json();
    CHECK(j["task_id"] == t.task_id);
    CHECK(j["n_test"] == t.test.size());
  }
  CHECK_THROWS_AS(finetune_task(bb, TaskBinding{"empty", {}, {}, {}, {}}, enc, f), ContractError);
}

TEST_CASE("report files") {
  const auto enc = small_encoder();
  const auto tasks = small_tasks(4);
  auto rng = make_rng(4);
  const auto bb = init_encoder(enc, rng);
  const auto f = quick_config();
  const auto dir = fs::temp_directory_path() / "muscle_test_reports";
  fs::remove_all(dir);
  fs::create_directories(dir);
  // A classification task whose test split holds both classes.
  const auto it = std::find_if(tasks.begin(), tasks.end(), [](const TaskBinding& t) {
    if (t.head.kind != HeadKind::classification) return false;
    const auto pos = std::count_if(t.test.begin(), t.test.end(), [](const Sample& s) { return s.label == 1; });
    return pos > 0 && static_cast<std::size_t>(pos) < t.test.size();
  });
  REQUIRE(it != tasks.end());
  const TaskBinding& task = *it;
  const auto res = finetune_task(bb, task, enc, f);
  write_report_json(res.report, dir / "r.json");
  std::ifstream in(dir / "r.json");
  CHECK(nlohmann::json::parse(in)["task_id"] == task.task_id);

  append_leaderboard_csv(dir / "lb.csv", "run", "muscle", 0, res.report);
  append_leaderboard_csv(dir / "lb.csv", "run", "muscle", 1, res.report);
  std::ifstream lb(dir / "lb.csv");
  std::string line;
  std::size_t headers = 0, rows = 0;
  while (std::getline(lb, line)) (line.rfind("run_id,", 0) == 0 ? headers : rows)++;
  CHECK(headers == 1);
  CHECK(rows == 2 * res.report.metrics.size());

  write_roc_csv(res.model, task, enc, dir / "roc.csv");
  std::ifstream roc(dir / "roc.csv");
  std::getline(roc, line);
  CHECK(line == "threshold,fpr,tpr");
  double last_fpr = -1.0, last_tpr = -1.0;
  while (std::getline(roc, line)) {
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    const double fpr = std::stod(line.substr(c1 + 1, c2 - c1 - 1)), tpr = std::stod(line.substr(c2 + 1));
    CHECK(fpr >= last_fpr);
    CHECK(tpr >= last_tpr);
    last_fpr = fpr;
    last_tpr = tpr;
  }
  CHECK(last_fpr == 1.0);
  CHECK(last_tpr == 1.0);
  fs::remove_all(dir);
}
