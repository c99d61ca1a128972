// SPDX-License-Identifier: Apache-2.0
//
// Multi-dataset harmonization: Z-score gray-scale normalization, bilinear
// resizing to a common resolution, pooling, and the geometric-only view
// augmentation used for contrastive pre-training.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "muscle/nets.hpp"
#include "muscle/rng.hpp"
#include "muscle/tensor.hpp"

namespace muscle {

/// Gray-scale image in [0,255] with optional annotations.
struct ImageRecord {
  Tensor pixels;  // 1×H×W
  std::string dataset_id;
  std::optional<int> label;
  std::optional<std::vector<int>> mask;  // H·W row-major

  std::size_t height() const { return pixels.dim(1); }
  std::size_t width() const { return pixels.dim(2); }
  void validate() const;
};

struct Splits {
  std::vector<std::size_t> train, val, test;
};

struct DatasetManifest {
  std::string dataset_id;
  std::vector<ImageRecord> records;
  Splits splits;
  std::optional<HeadConfig> task;  // empty: self-supervised only
  double gray_mean = 122.786;
  double gray_std = 18.390;

  /// Splits disjoint and in range, gray_std > 0, annotations match the task.
  void validate() const;
};

/// Requested augmentation switches, including the ones the policy forbids.
struct AugmentFlags {
  bool horizontal_flip = true;
  double rotation_deg = 10.0;
  int translate_px = 2;
  bool random_crop = false;
  bool gaussian_blur = false;
  bool color_jitter = false;
};

/// Geometric view augmentation. Cropping, blurring and intensity jitter are
/// not representable: the constructor rejects flags that ask for them.
class AugmentPolicy {
 public:
  AugmentPolicy() : AugmentPolicy(AugmentFlags{}) {}
  explicit AugmentPolicy(const AugmentFlags& flags);

  static AugmentPolicy identity();

  bool horizontal_flip() const noexcept { return flip_; }
  double rotation_deg() const noexcept { return rotation_deg_; }
  int translate_px() const noexcept { return translate_px_; }

  static constexpr bool random_crop() { return false; }
  static constexpr bool gaussian_blur() { return false; }
  static constexpr bool color_jitter() { return false; }

 private:
  bool flip_;
  double rotation_deg_;
  int translate_px_;
};

enum class NormMode {
  per_dataset,  // each record uses its manifest's gray_mean/gray_std
  global,       // every record uses the configured mean/std
};

struct PreprocessConfig {
  std::size_t target_h = 32;
  std::size_t target_w = 32;
  double mean = 122.786;
  double std = 18.390;
  NormMode mode = NormMode::per_dataset;
};

/// Normalized, resized sample ready for a network.
struct Sample {
  Tensor image;  // 1×target_h×target_w
  std::string dataset_id;
  int label = -1;
  std::vector<int> mask;  // target_h·target_w, empty when unannotated
};

Tensor zscore_normalize(const Tensor& pixels, double mean, double std);
Tensor zscore_normalize(const ImageRecord& img, double mean, double std);

/// Half-pixel-center bilinear interpolation of a 1×H×W image.
Tensor resize_bilinear(const Tensor& img, std::size_t out_h, std::size_t out_w);
std::vector<int> resize_mask_nearest(const std::vector<int>& mask, std::size_t h, std::size_t w,
                                     std::size_t out_h, std::size_t out_w);

/// Normalize then resize one record.
Sample preprocess_record(const ImageRecord& rec, const DatasetManifest& owner, const PreprocessConfig& cfg);
std::vector<Sample> prepare_split(const DatasetManifest& m, const std::vector<std::size_t>& indices,
                                  const PreprocessConfig& cfg);

/// Train splits of every manifest, preprocessed, in a seeded shuffle order.
std::vector<Sample> aggregate(const std::vector<DatasetManifest>& manifests, const PreprocessConfig& cfg,
                              std::uint64_t seed);
/// Global-constant form: every record normalized with (mean, std).
std::vector<Sample> aggregate(const std::vector<DatasetManifest>& manifests, std::size_t target_h,
                              std::size_t target_w, double mean, double std, std::uint64_t seed);

Tensor horizontal_flip(const Tensor& img);
/// Flip (p = 0.5), rotation and translation drawn from `rng`. Rotation is
/// nearest-neighbor about the image center; uncovered pixels become 0.
Tensor augment_view(const Tensor& img, const AugmentPolicy& policy, Rng& rng);

}  // namespace muscle
