// SPDX-License-Identifier: Apache-2.0
//
// Reference kernels. Written in the textbook formulation (explicit zero
// padding, gather-form input gradient) rather than mirroring the parallel
// loop nests, so agreement between the two is a real check.

#include <algorithm>
#include <vector>

#include "muscle/kernels.hpp"

namespace muscle::kernels::serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
}

void matmul_bt(std::span<const double> g, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * b[p * n + j];
      c[i * k + p] = s;
    }
}

void matmul_at(std::span<const double> a, std::span<const double> g, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += a[i * k + p] * g[i * n + j];
      c[p * n + j] = s;
    }
}

namespace {
std::vector<double> padded(const ConvGeometry& g, std::span<const double> input) {
  const std::size_t ph = g.h + 2 * g.pad, pw = g.w + 2 * g.pad;
  std::vector<double> out(g.c_in * ph * pw, 0.0);
  for (std::size_t c = 0; c < g.c_in; ++c)
    for (std::size_t y = 0; y < g.h; ++y)
      for (std::size_t x = 0; x < g.w; ++x)
        out[(c * ph + y + g.pad) * pw + x + g.pad] = input[(c * g.h + y) * g.w + x];
  return out;
}
}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernels, std::span<double> out) {
  const auto in = padded(g, input);
  const std::size_t ph = g.h + 2 * g.pad, pw = g.w + 2 * g.pad;
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t co = 0; co < g.c_out; ++co)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double s = 0.0;
        for (std::size_t ci = 0; ci < g.c_in; ++ci)
          for (std::size_t ky = 0; ky < g.kh; ++ky)
            for (std::size_t kx = 0; kx < g.kw; ++kx)
              s += in[(ci * ph + oy * g.stride + ky) * pw + ox * g.stride + kx] *
                   kernels[((co * g.c_in + ci) * g.kh + ky) * g.kw + kx];
        out[(co * oh + oy) * ow + ox] = s;
      }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> kernels, std::span<double> grad_in) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t ci = 0; ci < g.c_in; ++ci)
    for (std::size_t y = 0; y < g.h; ++y)
      for (std::size_t x = 0; x < g.w; ++x) {
        // Padded coordinate py = oy·stride + ky for every output tap touching (y, x).
        const std::size_t py = y + g.pad, px = x + g.pad;
        double s = 0.0;
        for (std::size_t co = 0; co < g.c_out; ++co)
          for (std::size_t ky = 0; ky < g.kh; ++ky) {
            if (py < ky || (py - ky) % g.stride) continue;
            const std::size_t oy = (py - ky) / g.stride;
            if (oy >= oh) continue;
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
              if (px < kx || (px - kx) % g.stride) continue;
              const std::size_t ox = (px - kx) / g.stride;
              if (ox >= ow) continue;
              s += grad_out[(co * oh + oy) * ow + ox] *
                   kernels[((co * g.c_in + ci) * g.kh + ky) * g.kw + kx];
            }
          }
        grad_in[(ci * g.h + y) * g.w + x] = s;
      }
}

void conv2d_backward_kernels(const ConvGeometry& g, std::span<const double> grad_out,
                             std::span<const double> input, std::span<double> grad_k) {
  const auto in = padded(g, input);
  const std::size_t ph = g.h + 2 * g.pad, pw = g.w + 2 * g.pad;
  const std::size_t oh = g.out_h(), ow = g.out_w();
  std::fill(grad_k.begin(), grad_k.begin() + static_cast<std::ptrdiff_t>(g.kernel_size()), 0.0);
  for (std::size_t co = 0; co < g.c_out; ++co)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double gv = grad_out[(co * oh + oy) * ow + ox];
        for (std::size_t ci = 0; ci < g.c_in; ++ci)
          for (std::size_t ky = 0; ky < g.kh; ++ky)
            for (std::size_t kx = 0; kx < g.kw; ++kx)
              grad_k[((co * g.c_in + ci) * g.kh + ky) * g.kw + kx] +=
                  gv * in[(ci * ph + oy * g.stride + ky) * pw + ox * g.stride + kx];
      }
}

}  // namespace muscle::kernels::serial
