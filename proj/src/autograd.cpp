// SPDX-License-Identifier: Apache-2.0

#include "muscle/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "muscle/errors.hpp"
#include "muscle/kernels.hpp"

namespace muscle {

const Tensor& Var::value() const {
  if (!tape_) throw StateError("use of an unbound Var");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (done_) throw StateError("tape already back-propagated");
  nodes_.push_back(Node{std::move(value), {}, {}, requires_grad, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  if (done_) throw StateError("tape already back-propagated");
  bool rg = false;
  for (auto i : inputs) rg = rg || nodes_.at(i).requires_grad;
  nodes_.push_back(Node{std::move(value), std::move(inputs), rg ? std::move(fn) : BackwardFn{}, rg, {}});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw ContractError("backward root was not produced on this tape");
  if (done_) throw StateError("backward called twice on one tape");
  if (nodes_[root.id_].value.numel() != 1)
    throw ContractError("backward root must be scalar, got shape " +
                        shape_str(nodes_[root.id_].value.shape()));
  done_ = true;
  for (auto& n : nodes_)
    if (n.requires_grad) n.grad.assign(n.value.numel(), 0.0);
  if (!nodes_[root.id_].requires_grad) return;
  nodes_[root.id_].grad[0] = 1.0;
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.backward) n.backward(*this, i);
  }
}

Tensor Tape::grad(Var v) const {
  if (v.tape_ != this) throw ContractError("Var belongs to another tape");
  const auto& n = nodes_[v.id_];
  if (!done_ || n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return Tensor(n.value.shape(), n.grad);
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (!a.tape() || a.tape() != b.tape()) throw ContractError("operands live on different tapes");
  return *a.tape();
}

void accumulate(Tape& t, std::size_t id, std::span<const double> g) {
  auto dst = t.grad_buffer(id);
  if (dst.empty()) return;
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

void check_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(av.shape()) + " and " +
                         shape_str(bv.shape()));
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out(Shape{m, n});
  kernels::matmul(av.data(), bv.data(), out.data(), m, k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib, m, k, n](Tape& tp, std::size_t self) {
    const auto g = tp.grad_of(self);
    if (tp.requires_grad(ia)) {
      std::vector<double> ga(m * k);
      kernels::matmul_bt(g, tp.value(ib).data(), ga, m, k, n);
      accumulate(tp, ia, ga);
    }
    if (tp.requires_grad(ib)) {
      std::vector<double> gb(k * n);
      kernels::matmul_at(tp.value(ia).data(), g, gb, m, k, n);
      accumulate(tp, ib, gb);
    }
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    accumulate(tp, ia, tp.grad_of(self));
    accumulate(tp, ib, tp.grad_of(self));
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    accumulate(tp, ia, tp.grad_of(self));
    auto dst = tp.grad_buffer(ib);
    const auto g = tp.grad_of(self);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const auto g = tp.grad_of(self);
    // Read both values before writing: a and b may be the same node.
    const auto& av = tp.value(ia);
    const auto& bv = tp.value(ib);
    auto da = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i] * bv[i];
    auto db = tp.grad_buffer(ib);
    for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[i] * av[i];
  });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {ix}, [ix, factor](Tape& tp, std::size_t self) {
    const auto g = tp.grad_of(self);
    auto dst = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * g[i];
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t ix = x.id();
  return x.tape()->record(Tensor::scalar(s), {ix}, [ix](Tape& tp, std::size_t self) {
    const double g = tp.grad_of(self)[0];
    for (auto& d : tp.grad_buffer(ix)) d += g;
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {ix}, [ix](Tape& tp, std::size_t self) {
    const auto g = tp.grad_of(self);
    const auto& in = tp.value(ix);
    auto dst = tp.grad_buffer(ix);
    // Subgradient at exactly 0 is 0.
    for (std::size_t i = 0; i < dst.size(); ++i)
      if (in[i] > 0.0) dst[i] += g[i];
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {ix}, [ix](Tape& tp, std::size_t self) {
    accumulate(tp, ix, tp.grad_of(self));
  });
}

Var conv2d(Var input, Var kernels, std::size_t stride, std::size_t pad) {
  Tape& t = same_tape(input, kernels);
  const auto& in = input.value();
  const auto& k = kernels.value();
  if (in.rank() != 3 || k.rank() != 4 || k.dim(1) != in.dim(0))
    throw DimensionError("conv2d: incompatible input " + shape_str(in.shape()) + " and kernels " +
                         shape_str(k.shape()));
  if (stride == 0) throw ContractError("conv2d: stride must be positive");
  kernels::ConvGeometry g{in.dim(0), in.dim(1), in.dim(2), k.dim(0), k.dim(2), k.dim(3), stride, pad};
  if (g.kh > g.h + 2 * pad || g.kw > g.w + 2 * pad)
    throw DimensionError("conv2d: kernel " + shape_str(k.shape()) + " larger than padded input " +
                         shape_str(in.shape()) + " with pad " + std::to_string(pad));
  Tensor out(Shape{g.c_out, g.out_h(), g.out_w()});
  kernels::conv2d_forward(g, in.data(), k.data(), out.data());
  const std::size_t ii = input.id(), ik = kernels.id();
  return t.record(std::move(out), {ii, ik}, [g, ii, ik](Tape& tp, std::size_t self) {
    const auto go = tp.grad_of(self);
    if (tp.requires_grad(ii)) {
      std::vector<double> gi(g.input_size());
      kernels::conv2d_backward_input(g, go, tp.value(ik).data(), gi);
      accumulate(tp, ii, gi);
    }
    if (tp.requires_grad(ik)) {
      std::vector<double> gk(g.kernel_size());
      kernels::conv2d_backward_kernels(g, go, tp.value(ii).data(), gk);
      accumulate(tp, ik, gk);
    }
  });
}

Var add_channel_bias(Var x, Var bias) {
  Tape& t = same_tape(x, bias);
  const auto& xv = x.value();
  if (xv.rank() != 3 || bias.value().numel() != xv.dim(0))
    throw DimensionError("add_channel_bias: " + shape_str(xv.shape()) + " with bias " +
                         shape_str(bias.shape()));
  const std::size_t c = xv.dim(0), hw = xv.dim(1) * xv.dim(2);
  Tensor out = xv;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] += bias.value()[ch];
  const std::size_t ix = x.id(), ib = bias.id();
  return t.record(std::move(out), {ix, ib}, [ix, ib, c, hw](Tape& tp, std::size_t self) {
    const auto g = tp.grad_of(self);
    accumulate(tp, ix, g);
    auto db = tp.grad_buffer(ib);
    if (db.empty()) return;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) s += g[ch * hw + i];
      db[ch] += s;
    }
  });
}

Var global_avg_pool(Var x) {
  const auto& xv = x.value();
  if (xv.rank() != 3) throw DimensionError("global_avg_pool expects C×H×W, got " + shape_str(xv.shape()));
  const std::size_t c = xv.dim(0), hw = xv.dim(1) * xv.dim(2);
  Tensor out(Shape{1, c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += xv[ch * hw + i];
    out[ch] = s / static_cast<double>(hw);
  }
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {ix}, [ix, c, hw](Tape& tp, std::size_t self) {
    const auto g = tp.grad_of(self);
    auto dst = tp.grad_buffer(ix);
    const double inv = 1.0 / static_cast<double>(hw);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < hw; ++i) dst[ch * hw + i] += g[ch] * inv;
  });
}

Var upsample_nearest(Var x, std::size_t out_h, std::size_t out_w) {
  const auto& xv = x.value();
  if (xv.rank() != 3) throw DimensionError("upsample_nearest expects C×H×W, got " + shape_str(xv.shape()));
  if (out_h == 0 || out_w == 0) throw ContractError("upsample_nearest: zero target size");
  const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  std::vector<std::size_t> src(out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t xx = 0; xx < out_w; ++xx) src[y * out_w + xx] = (y * h / out_h) * w + xx * w / out_w;
  Tensor out(Shape{c, out_h, out_w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < src.size(); ++i) out[ch * src.size() + i] = xv[ch * h * w + src[i]];
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {ix}, [ix, c, h, w, src = std::move(src)](Tape& tp, std::size_t self) {
    const auto g = tp.grad_of(self);
    auto dst = tp.grad_buffer(ix);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < src.size(); ++i) dst[ch * h * w + src[i]] += g[ch * src.size() + i];
  });
}

Var l2_normalize(Var x) {
  const auto& xv = x.value();
  const double norm = std::sqrt(xv.squared_norm());
  if (norm == 0.0) throw ContractError("l2_normalize of a zero vector");
  Tensor out = xv;
  for (auto& v : out.data()) v /= norm;
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {ix}, [ix, norm](Tape& tp, std::size_t self) {
    // d(x/|x|) = (g − y(y·g)) / |x|
    const auto g = tp.grad_of(self);
    const auto& y = tp.value(self);
    double yg = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) yg += y[i] * g[i];
    auto dst = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += (g[i] - y[i] * yg) / norm;
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const auto& lv = logits.value();
  if (lv.rank() != 2) throw DimensionError("softmax_cross_entropy expects B×C logits, got " + shape_str(lv.shape()));
  const std::size_t b = lv.dim(0), c = lv.dim(1);
  if (labels.size() != b)
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(b));
  std::vector<double> probs(b * c);
  double loss = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= c)
      throw IndexError("label " + std::to_string(labels[r]) + " outside [0," + std::to_string(c) + ")");
    const double* row = lv.data().data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] = std::exp(row[j] - mx) / z;
    loss += -(row[labels[r]] - mx - std::log(z));
  }
  loss /= static_cast<double>(b);
  std::vector<int> lab(labels.begin(), labels.end());
  const std::size_t il = logits.id();
  return logits.tape()->record(
      Tensor::scalar(loss), {il},
      [il, b, c, probs = std::move(probs), lab = std::move(lab)](Tape& tp, std::size_t self) {
        const double g = tp.grad_of(self)[0] / static_cast<double>(b);
        auto dst = tp.grad_buffer(il);
        for (std::size_t r = 0; r < b; ++r)
          for (std::size_t j = 0; j < c; ++j)
            dst[r * c + j] += g * (probs[r * c + j] - (static_cast<int>(j) == lab[r] ? 1.0 : 0.0));
      });
}

Var pixel_cross_entropy(Var logits, std::span<const int> labels) {
  const auto& lv = logits.value();
  if (lv.rank() != 3) throw DimensionError("pixel_cross_entropy expects L×H×W logits, got " + shape_str(lv.shape()));
  const std::size_t nl = lv.dim(0), np = lv.dim(1) * lv.dim(2);
  if (labels.size() != np)
    throw DimensionError("pixel_cross_entropy: mask of " + std::to_string(labels.size()) + " pixels for logits " +
                         shape_str(lv.shape()));
  std::vector<double> probs(nl * np);
  double loss = 0.0;
  for (std::size_t p = 0; p < np; ++p) {
    if (labels[p] < 0 || static_cast<std::size_t>(labels[p]) >= nl)
      throw IndexError("mask label " + std::to_string(labels[p]) + " outside [0," + std::to_string(nl) + ")");
    double mx = lv[p];
    for (std::size_t l = 1; l < nl; ++l) mx = std::max(mx, lv[l * np + p]);
    double z = 0.0;
    for (std::size_t l = 0; l < nl; ++l) z += std::exp(lv[l * np + p] - mx);
    for (std::size_t l = 0; l < nl; ++l) probs[l * np + p] = std::exp(lv[l * np + p] - mx) / z;
    loss += -(lv[static_cast<std::size_t>(labels[p]) * np + p] - mx - std::log(z));
  }
  loss /= static_cast<double>(np);
  std::vector<int> lab(labels.begin(), labels.end());
  const std::size_t il = logits.id();
  return logits.tape()->record(
      Tensor::scalar(loss), {il},
      [il, nl, np, probs = std::move(probs), lab = std::move(lab)](Tape& tp, std::size_t self) {
        const double g = tp.grad_of(self)[0] / static_cast<double>(np);
        auto dst = tp.grad_buffer(il);
        for (std::size_t l = 0; l < nl; ++l)
          for (std::size_t p = 0; p < np; ++p)
            dst[l * np + p] += g * (probs[l * np + p] - (static_cast<int>(l) == lab[p] ? 1.0 : 0.0));
      });
}

}  // namespace muscle
