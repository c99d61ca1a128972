// SPDX-License-Identifier: Apache-2.0
//
// Seed-deterministic synthetic gray-scale datasets. Background pixels are
// N(gray_mean, gray_std); positive images carry 1..3 bright disks ("blobs")
// whose support is the segmentation mask and whose presence is the class.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "muscle/preprocess.hpp"

namespace muscle {

struct BlobSignal {
  int count_min = 1;
  int count_max = 3;
  double radius_min = 2.5;
  double radius_max = 5.0;
  double intensity_offset = 20.0;  // added to raw gray values inside a blob
};

struct SynthSpec {
  std::string dataset_id;
  std::size_t n_images = 200;
  std::size_t height = 32;
  std::size_t width = 32;
  double gray_mean = 122.786;
  double gray_std = 18.390;
  std::optional<HeadKind> task;  // empty: unannotated pre-training data
  BlobSignal signal;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Labels ~ Bernoulli(0.5); 70/10/20 train/val/test split in record order.
DatasetManifest gen_dataset(const SynthSpec& spec);

struct StandardSuiteOptions {
  std::size_t images_per_dataset = 200;
  /// Scales every blob intensity offset (offsets are set in units of each
  /// dataset's gray_std).
  double signal_scale = 1.0;
  /// Small faint lesions for classification and task-free data.
  BlobSignal lesion{1, 3, 2.5, 4.0, 1.25};
  /// Larger brighter structures for segmentation data.
  BlobSignal organ{1, 3, 4.0, 7.0, 2.0};
};

/// The six standard specs: four task-bound (2 classification,
/// 2 segmentation) followed by two self-supervised-only ones.
std::vector<SynthSpec> standard_suite_specs(std::uint64_t master_seed, const StandardSuiteOptions& opts = {});
std::vector<DatasetManifest> standard_suite(std::uint64_t master_seed, const StandardSuiteOptions& opts = {});

}  // namespace muscle
