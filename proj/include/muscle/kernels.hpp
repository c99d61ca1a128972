// SPDX-License-Identifier: Apache-2.0
//
// Dense numeric kernels behind the autograd ops. The default entry points
// are OpenMP-parallel over an output-owned index, so every output element
// is accumulated by exactly one thread in a fixed order and results do not
// depend on the thread count. `kernels::serial` holds independently written
// single-threaded references used by the tests and the benchmark.

#pragma once

#include <cstddef>
#include <span>

namespace muscle::kernels {

struct ConvGeometry {
  std::size_t c_in = 1, h = 1, w = 1;
  std::size_t c_out = 1, kh = 1, kw = 1;
  std::size_t stride = 1, pad = 0;

  std::size_t out_h() const { return (h + 2 * pad - kh) / stride + 1; }
  std::size_t out_w() const { return (w + 2 * pad - kw) / stride + 1; }
  std::size_t input_size() const { return c_in * h * w; }
  std::size_t kernel_size() const { return c_out * c_in * kh * kw; }
  std::size_t output_size() const { return c_out * out_h() * out_w(); }
};

// c[m×n] = a[m×k] · b[k×n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
// c[m×k] = g[m×n] · b[k×n]ᵀ
void matmul_bt(std::span<const double> g, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
// c[k×n] = a[m×k]ᵀ · g[m×n]
void matmul_at(std::span<const double> a, std::span<const double> g, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernels, std::span<double> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> kernels, std::span<double> grad_in);
void conv2d_backward_kernels(const ConvGeometry& g, std::span<const double> grad_out,
                             std::span<const double> input, std::span<double> grad_k);

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_bt(std::span<const double> g, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_at(std::span<const double> a, std::span<const double> g, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernels, std::span<double> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> kernels, std::span<double> grad_in);
void conv2d_backward_kernels(const ConvGeometry& g, std::span<const double> grad_out,
                             std::span<const double> input, std::span<double> grad_k);

}  // namespace serial
}  // namespace muscle::kernels
