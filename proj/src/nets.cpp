// SPDX-License-Identifier: Apache-2.0

#include "muscle/nets.hpp"

#include <cmath>

#include "muscle/errors.hpp"

namespace muscle {

namespace {
std::string conv_name(std::size_t i, const char* what) {
  return "enc.conv" + std::to_string(i) + "." + what;
}
}  // namespace

void EncoderConfig::validate() const {
  if (in_channels < 1) throw ContractError("encoder in_channels must be >= 1");
  if (feature_dim < 2) throw ContractError("encoder feature_dim must be >= 2");
  if (convs.empty()) throw ContractError("encoder needs at least one conv layer");
  feature_map_shape();
}

Shape EncoderConfig::feature_map_shape() const {
  std::size_t c = in_channels, h = input_h, w = input_w;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const auto& s = convs[i];
    if (s.out_channels == 0 || s.kernel == 0 || s.stride == 0)
      throw ContractError("conv layer " + std::to_string(i) + " has a zero size field");
    const std::size_t pad = s.kernel / 2;
    if (s.kernel > h + 2 * pad || s.kernel > w + 2 * pad)
      throw ContractError("conv layer " + std::to_string(i) + " output collapses below 1x1 at input " +
                          std::to_string(input_h) + "x" + std::to_string(input_w));
    h = (h + 2 * pad - s.kernel) / s.stride + 1;
    w = (w + 2 * pad - s.kernel) / s.stride + 1;
    c = s.out_channels;
  }
  return {c, h, w};
}

std::string to_string(HeadKind k) {
  return k == HeadKind::classification ? "classification" : "segmentation";
}

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "classification") return HeadKind::classification;
  if (s == "segmentation") return HeadKind::segmentation;
  throw ContractError("unknown head kind '" + s + "'");
}

void HeadConfig::validate() const {
  if (num_classes < 2) throw ContractError("head needs at least 2 classes/labels");
}

Tensor kaiming_init(const Shape& shape, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw ContractError("kaiming_init: fan_in must be >= 1");
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor t(shape);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

ParamVector init_encoder(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamVector p;
  std::size_t c_in = cfg.in_channels;
  for (std::size_t i = 0; i < cfg.convs.size(); ++i) {
    const auto& s = cfg.convs[i];
    p.set(conv_name(i, "w"), kaiming_init({s.out_channels, c_in, s.kernel, s.kernel}, c_in * s.kernel * s.kernel, rng));
    p.set(conv_name(i, "b"), Tensor({s.out_channels}, 0.0));
    c_in = s.out_channels;
  }
  p.set("enc.proj.w", kaiming_init({c_in, cfg.feature_dim}, c_in, rng));
  p.set("enc.proj.b", Tensor({1, cfg.feature_dim}, 0.0));
  return p;
}

ParamVector init_head(const HeadConfig& head, const EncoderConfig& enc, Rng& rng) {
  head.validate();
  ParamVector p;
  if (head.kind == HeadKind::classification) {
    p.set("head.fc.w", kaiming_init({enc.feature_dim, head.num_classes}, enc.feature_dim, rng));
    p.set("head.fc.b", Tensor({1, head.num_classes}, 0.0));
  } else {
    const std::size_t c = enc.feature_map_shape()[0];
    p.set("head.seg.w", kaiming_init({head.num_classes, c, 1, 1}, c, rng));
    p.set("head.seg.b", Tensor({head.num_classes}, 0.0));
  }
  return p;
}

EncoderOutput encoder_forward(const EncoderConfig& cfg, const BoundParams& params, Var image) {
  const auto& s = image.shape();
  if (s.size() != 3 || s[0] != cfg.in_channels || s[1] != cfg.input_h || s[2] != cfg.input_w)
    throw DimensionError("encoder expects input [" + std::to_string(cfg.in_channels) + "x" +
                         std::to_string(cfg.input_h) + "x" + std::to_string(cfg.input_w) + "], got " +
                         shape_str(s));
  Var x = image;
  for (std::size_t i = 0; i < cfg.convs.size(); ++i) {
    const auto& spec = cfg.convs[i];
    x = conv2d(x, params[conv_name(i, "w")], spec.stride, spec.kernel / 2);
    x = relu(add_channel_bias(x, params[conv_name(i, "b")]));
  }
  Var pooled = global_avg_pool(x);
  Var emb = add(matmul(pooled, params["enc.proj.w"]), params["enc.proj.b"]);
  return {reshape(emb, {cfg.feature_dim}), x};
}

Tensor encoder_forward(const EncoderConfig& cfg, const ParamVector& params, const Tensor& image) {
  Tape tape;
  BoundParams bound(tape, params, false);
  return encoder_forward(cfg, bound, tape.constant(image)).embedding.value();
}

Var head_forward(const HeadConfig& cfg, const BoundParams& params, Var features) {
  const auto& s = features.shape();
  if (cfg.kind == HeadKind::classification) {
    if (s.size() == 3) throw ContractError("classification head expects an embedding, got a feature map");
    Var row = reshape(features, {1, shape_numel(s)});
    return add(matmul(row, params["head.fc.w"]), params["head.fc.b"]);
  }
  if (s.size() != 3) throw ContractError("segmentation head expects a C×H×W feature map, got " + shape_str(s));
  return add_channel_bias(conv2d(features, params["head.seg.w"], 1, 0), params["head.seg.b"]);
}

Var head_forward(const HeadConfig& cfg, const BoundParams& params, const EncoderOutput& enc) {
  return head_forward(cfg, params, cfg.kind == HeadKind::classification ? enc.embedding : enc.feature_map);
}

}  // namespace muscle
