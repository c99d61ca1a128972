// SPDX-License-Identifier: Apache-2.0

#include "muscle/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "muscle/errors.hpp"

namespace muscle {

void ImageRecord::validate() const {
  if (pixels.rank() != 3 || pixels.dim(0) != 1)
    throw DimensionError("image record '" + dataset_id + "' must be 1×H×W, got " + shape_str(pixels.shape()));
  for (double v : pixels.data())
    if (!(v >= 0.0 && v <= 255.0)) throw ContractError("pixel value outside [0,255] in '" + dataset_id + "'");
  if (mask && mask->size() != height() * width())
    throw DimensionError("mask size does not match image in '" + dataset_id + "'");
}

void DatasetManifest::validate() const {
  if (!(gray_std > 0.0)) throw ContractError("dataset '" + dataset_id + "': gray_std must be > 0");
  std::set<std::size_t> seen;
  for (const auto* split : {&splits.train, &splits.val, &splits.test})
    for (auto i : *split) {
      if (i >= records.size())
        throw ContractError("dataset '" + dataset_id + "': split index " + std::to_string(i) + " out of range");
      if (!seen.insert(i).second)
        throw ContractError("dataset '" + dataset_id + "': splits overlap at index " + std::to_string(i));
    }
  for (const auto& r : records) {
    r.validate();
    if (!task) continue;
    task->validate();
    const int n = static_cast<int>(task->num_classes);
    if (task->kind == HeadKind::classification) {
      if (!r.label) throw ContractError("dataset '" + dataset_id + "': classification record without label");
      if (*r.label < 0 || *r.label >= n) throw IndexError("dataset '" + dataset_id + "': label out of range");
    } else {
      if (!r.mask) throw ContractError("dataset '" + dataset_id + "': segmentation record without mask");
      for (int v : *r.mask)
        if (v < 0 || v >= n) throw IndexError("dataset '" + dataset_id + "': mask label out of range");
    }
  }
}

AugmentPolicy::AugmentPolicy(const AugmentFlags& f)
    : flip_(f.horizontal_flip), rotation_deg_(f.rotation_deg), translate_px_(f.translate_px) {
  if (f.random_crop) throw ContractError("augment policy: random cropping is not permitted");
  if (f.gaussian_blur) throw ContractError("augment policy: gaussian blurring is not permitted");
  if (f.color_jitter) throw ContractError("augment policy: color/gray-scale jitter is not permitted");
  if (rotation_deg_ < 0.0 || translate_px_ < 0)
    throw ContractError("augment policy: magnitudes must be non-negative");
}

AugmentPolicy AugmentPolicy::identity() {
  AugmentFlags f;
  f.horizontal_flip = false;
  f.rotation_deg = 0.0;
  f.translate_px = 0;
  return AugmentPolicy(f);
}

Tensor zscore_normalize(const Tensor& pixels, double mean, double std) {
  if (!(std > 0.0)) throw ContractError("zscore_normalize: std must be > 0");
  Tensor out = pixels;
  for (auto& v : out.data()) v = (v - mean) / std;
  return out;
}

Tensor zscore_normalize(const ImageRecord& img, double mean, double std) {
  return zscore_normalize(img.pixels, mean, std);
}

Tensor resize_bilinear(const Tensor& img, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ContractError("resize_bilinear: target dimensions must be >= 1");
  if (img.rank() != 3 || img.dim(0) != 1) throw DimensionError("resize_bilinear expects 1×H×W, got " + shape_str(img.shape()));
  const std::size_t h = img.dim(1), w = img.dim(2);
  if (h == out_h && w == out_w) return img;
  // Source coordinate of a destination pixel center, clamped to the edge samples.
  auto axis = [](std::size_t i, std::size_t src, std::size_t dst, std::size_t& i0, std::size_t& i1, double& frac) {
    double s = (static_cast<double>(i) + 0.5) * static_cast<double>(src) / static_cast<double>(dst) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    i0 = static_cast<std::size_t>(std::floor(s));
    i1 = std::min(i0 + 1, src - 1);
    frac = s - static_cast<double>(i0);
  };
  Tensor out(Shape{1, out_h, out_w});
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t y0, y1;
    double fy;
    axis(y, h, out_h, y0, y1, fy);
    for (std::size_t x = 0; x < out_w; ++x) {
      std::size_t x0, x1;
      double fx;
      axis(x, w, out_w, x0, x1, fx);
      const double top = img[y0 * w + x0] * (1.0 - fx) + img[y0 * w + x1] * fx;
      const double bot = img[y1 * w + x0] * (1.0 - fx) + img[y1 * w + x1] * fx;
      out[y * out_w + x] = top * (1.0 - fy) + bot * fy;
    }
  }
  return out;
}

std::vector<int> resize_mask_nearest(const std::vector<int>& mask, std::size_t h, std::size_t w,
                                     std::size_t out_h, std::size_t out_w) {
  if (mask.size() != h * w) throw DimensionError("resize_mask_nearest: mask size does not match h×w");
  if (h == out_h && w == out_w) return mask;
  std::vector<int> out(out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const std::size_t sy = std::min(h - 1, (2 * y + 1) * h / (2 * out_h));
    for (std::size_t x = 0; x < out_w; ++x) {
      const std::size_t sx = std::min(w - 1, (2 * x + 1) * w / (2 * out_w));
      out[y * out_w + x] = mask[sy * w + sx];
    }
  }
  return out;
}

Sample preprocess_record(const ImageRecord& rec, const DatasetManifest& owner, const PreprocessConfig& cfg) {
  const bool per_dataset = cfg.mode == NormMode::per_dataset;
  const double mean = per_dataset ? owner.gray_mean : cfg.mean;
  const double std = per_dataset ? owner.gray_std : cfg.std;
  Sample s;
  s.image = resize_bilinear(zscore_normalize(rec, mean, std), cfg.target_h, cfg.target_w);
  s.dataset_id = owner.dataset_id;
  s.label = rec.label.value_or(-1);
  if (rec.mask) s.mask = resize_mask_nearest(*rec.mask, rec.height(), rec.width(), cfg.target_h, cfg.target_w);
  return s;
}

std::vector<Sample> prepare_split(const DatasetManifest& m, const std::vector<std::size_t>& indices,
                                  const PreprocessConfig& cfg) {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(preprocess_record(m.records.at(i), m, cfg));
  return out;
}

std::vector<Sample> aggregate(const std::vector<DatasetManifest>& manifests, const PreprocessConfig& cfg,
                              std::uint64_t seed) {
  std::vector<Sample> pool;
  for (const auto& m : manifests) {
    auto part = prepare_split(m, m.splits.train, cfg);
    std::move(part.begin(), part.end(), std::back_inserter(pool));
  }
  if (pool.empty()) throw ContractError("aggregate: no training records in any manifest");
  auto rng = make_rng(seed, {fnv1a("aggregate")});
  std::shuffle(pool.begin(), pool.end(), rng);
  return pool;
}

std::vector<Sample> aggregate(const std::vector<DatasetManifest>& manifests, std::size_t target_h,
                              std::size_t target_w, double mean, double std, std::uint64_t seed) {
  PreprocessConfig cfg;
  cfg.target_h = target_h;
  cfg.target_w = target_w;
  cfg.mean = mean;
  cfg.std = std;
  cfg.mode = NormMode::global;
  return aggregate(manifests, cfg, seed);
}

Tensor horizontal_flip(const Tensor& img) {
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor out(img.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out[(ch * h + y) * w + x] = img[(ch * h + y) * w + (w - 1 - x)];
  return out;
}

Tensor augment_view(const Tensor& img, const AugmentPolicy& policy, Rng& rng) {
  if (img.rank() != 3) throw DimensionError("augment_view expects C×H×W, got " + shape_str(img.shape()));
  bool flip = false;
  double theta = 0.0;
  long dx = 0, dy = 0;
  if (policy.horizontal_flip()) flip = std::bernoulli_distribution(0.5)(rng);
  if (policy.rotation_deg() > 0.0)
    theta = std::uniform_real_distribution<double>(-policy.rotation_deg(), policy.rotation_deg())(rng) *
            std::numbers::pi / 180.0;
  if (policy.translate_px() > 0) {
    std::uniform_int_distribution<long> shift(-policy.translate_px(), policy.translate_px());
    dx = shift(rng);
    dy = shift(rng);
  }
  const Tensor src = flip ? horizontal_flip(img) : img;
  if (theta == 0.0 && dx == 0 && dy == 0) return src;

  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0, cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  Tensor out(img.shape(), 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      // Inverse map: undo the translation, then the rotation.
      const double ty = static_cast<double>(static_cast<long>(y) - dy) - cy;
      const double tx = static_cast<double>(static_cast<long>(x) - dx) - cx;
      const long sy = std::lround(cs * ty + sn * tx + cy);
      const long sx = std::lround(-sn * ty + cs * tx + cx);
      if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
      for (std::size_t ch = 0; ch < c; ++ch)
        out[(ch * h + y) * w + x] = src[(ch * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
    }
  return out;
}

}  // namespace muscle
