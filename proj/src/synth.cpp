// SPDX-License-Identifier: Apache-2.0

#include "muscle/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "muscle/errors.hpp"

namespace muscle {

void SynthSpec::validate() const {
  if (dataset_id.empty()) throw ContractError("synth spec needs a dataset_id");
  if (n_images == 0) throw ContractError("synth spec '" + dataset_id + "': n_images must be >= 1");
  if (!(gray_std > 0.0)) throw ContractError("synth spec '" + dataset_id + "': gray_std must be > 0");
  if (height < 8 || width < 8) throw ContractError("synth spec '" + dataset_id + "': resolution below 8x8");
  const double half = static_cast<double>(std::min(height, width)) / 2.0;
  if (signal.count_min < 1 || signal.count_max < signal.count_min)
    throw ContractError("synth spec '" + dataset_id + "': invalid blob count range");
  if (!(signal.radius_min > 0.0) || signal.radius_max < signal.radius_min || !(signal.radius_max < half))
    throw ContractError("synth spec '" + dataset_id + "': blob radius must be in (0, min(H,W)/2)");
}

DatasetManifest gen_dataset(const SynthSpec& spec) {
  spec.validate();
  DatasetManifest m;
  m.dataset_id = spec.dataset_id;
  m.gray_mean = spec.gray_mean;
  m.gray_std = spec.gray_std;
  if (spec.task) m.task = HeadConfig{*spec.task, 2};

  const std::size_t h = spec.height, w = spec.width;
  m.records.resize(spec.n_images);
  // Each image has its own generator stream, so records are independent.
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < spec.n_images; ++i) {
    auto rng = make_rng(spec.seed, {fnv1a(spec.dataset_id), i});
    const bool positive = std::bernoulli_distribution(0.5)(rng);
    std::normal_distribution<double> noise(spec.gray_mean, spec.gray_std);
    std::vector<double> raw(h * w);
    for (auto& v : raw) v = noise(rng);

    std::vector<int> mask(h * w, 0);
    if (positive) {
      const auto& s = spec.signal;
      const int n = std::uniform_int_distribution<int>(s.count_min, s.count_max)(rng);
      for (int b = 0; b < n; ++b) {
        const double r = std::uniform_real_distribution<double>(s.radius_min, s.radius_max)(rng);
        const double cy = std::uniform_real_distribution<double>(r, static_cast<double>(h) - 1.0 - r)(rng);
        const double cx = std::uniform_real_distribution<double>(r, static_cast<double>(w) - 1.0 - r)(rng);
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) {
            const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
            if (dy * dy + dx * dx <= r * r) mask[y * w + x] = 1;
          }
      }
      for (std::size_t p = 0; p < raw.size(); ++p)
        if (mask[p]) raw[p] += s.intensity_offset;
    }

    ImageRecord& rec = m.records[i];
    rec.dataset_id = spec.dataset_id;
    // 8-bit gray levels, as stored by real acquisitions.
    for (auto& v : raw) v = std::round(std::clamp(v, 0.0, 255.0));
    rec.pixels = Tensor(Shape{1, h, w}, std::move(raw));
    if (spec.task == HeadKind::classification) rec.label = positive ? 1 : 0;
    if (spec.task == HeadKind::segmentation) {
      rec.label = positive ? 1 : 0;
      rec.mask = std::move(mask);
    }
  }

  const std::size_t n_train = spec.n_images * 7 / 10;
  const std::size_t n_val = spec.n_images / 10;
  for (std::size_t i = 0; i < spec.n_images; ++i) {
    if (i < n_train)
      m.splits.train.push_back(i);
    else if (i < n_train + n_val)
      m.splits.val.push_back(i);
    else
      m.splits.test.push_back(i);
  }
  return m;
}

std::vector<SynthSpec> standard_suite_specs(std::uint64_t master_seed, const StandardSuiteOptions& opts) {
  struct Row {
    const char* id;
    double mean, std;
    std::size_t h, w;
    std::optional<HeadKind> task;
  };
  const Row rows[] = {
      {"chest_cls", 122.8, 18.4, 32, 32, HeadKind::classification},
      {"lung_seg", 90.0, 25.0, 40, 32, HeadKind::segmentation},
      {"bone_cls", 160.0, 12.0, 32, 48, HeadKind::classification},
      {"hand_seg", 110.0, 30.0, 36, 36, HeadKind::segmentation},
      {"elbow_ssl", 140.0, 20.0, 48, 40, std::nullopt},
      {"wrist_ssl", 100.0, 15.0, 32, 40, std::nullopt},
  };
  std::vector<SynthSpec> specs;
  std::uint64_t k = 0;
  for (const auto& r : rows) {
    SynthSpec s;
    s.dataset_id = r.id;
    s.n_images = opts.images_per_dataset;
    s.height = r.h;
    s.width = r.w;
    s.gray_mean = r.mean;
    s.gray_std = r.std;
    s.task = r.task;
    s.signal = r.task == HeadKind::segmentation ? opts.organ : opts.lesion;
    // Signal strength scales with each dataset's own noise level.
    s.signal.intensity_offset *= opts.signal_scale * r.std;
    s.seed = derive_seed(master_seed, {k++});
    specs.push_back(s);
  }
  return specs;
}

std::vector<DatasetManifest> standard_suite(std::uint64_t master_seed, const StandardSuiteOptions& opts) {
  std::vector<DatasetManifest> out;
  for (const auto& s : standard_suite_specs(master_seed, opts)) out.push_back(gen_dataset(s));
  return out;
}

}  // namespace muscle
