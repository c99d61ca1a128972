// SPDX-License-Identifier: Apache-2.0
//
// Shared convolutional encoder (the backbone) and the per-task heads.
//
// Parameter names: the encoder owns "enc.*", heads own "head.*". The
// backbone ParamVector is exactly the "enc.*" set.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "muscle/autograd.hpp"
#include "muscle/param_vector.hpp"
#include "muscle/rng.hpp"

namespace muscle {

struct ConvSpec {
  std::size_t out_channels = 8;
  std::size_t kernel = 3;
  std::size_t stride = 2;
};

struct EncoderConfig {
  std::size_t in_channels = 1;
  std::vector<ConvSpec> convs{{8, 3, 2}, {16, 3, 2}, {32, 3, 2}};
  std::size_t feature_dim = 32;
  std::size_t input_h = 32;
  std::size_t input_w = 32;

  /// Throws ContractError when feature_dim < 2 or a layer collapses below 1×1.
  void validate() const;
  /// C×h×w of the last conv layer's output for the configured resolution.
  Shape feature_map_shape() const;
};

enum class HeadKind { classification, segmentation };

std::string to_string(HeadKind k);
HeadKind head_kind_from_string(const std::string& s);

struct HeadConfig {
  HeadKind kind = HeadKind::classification;
  /// Classes for classification, mask labels for segmentation.
  std::size_t num_classes = 2;

  void validate() const;
};

/// i.i.d. N(0, 2/fan_in).
Tensor kaiming_init(const Shape& shape, std::size_t fan_in, Rng& rng);

ParamVector init_encoder(const EncoderConfig& cfg, Rng& rng);
ParamVector init_head(const HeadConfig& head, const EncoderConfig& enc, Rng& rng);

struct EncoderOutput {
  Var embedding;    // [feature_dim]
  Var feature_map;  // last pre-pool activation, C×h×w
};

EncoderOutput encoder_forward(const EncoderConfig& cfg, const BoundParams& params, Var image);

/// Value-only forward; returns the embedding.
Tensor encoder_forward(const EncoderConfig& cfg, const ParamVector& params, const Tensor& image);

/// Classification: features = embedding, returns 1×num_classes logits.
/// Segmentation: features = pre-pool map, returns labels×h×w logits (1×1 conv).
Var head_forward(const HeadConfig& cfg, const BoundParams& params, Var features);
Var head_forward(const HeadConfig& cfg, const BoundParams& params, const EncoderOutput& enc);

}  // namespace muscle
