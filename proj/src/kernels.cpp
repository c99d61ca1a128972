// SPDX-License-Identifier: Apache-2.0

#include "muscle/kernels.hpp"

#include <algorithm>
#include <cstdint>

namespace muscle::kernels {

namespace {
// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = std::size_t{1} << 16;
}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c.data() + i * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void matmul_bt(std::span<const double> g, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* grow = g.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b.data() + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
      c[i * k + p] = s;
    }
  }
}

void matmul_at(std::span<const double> a, std::span<const double> g, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
  for (std::int64_t pp = 0; pp < rows; ++pp) {
    const auto p = static_cast<std::size_t>(pp);
    double* crow = c.data() + p * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double aip = a[i * k + p];
      const double* grow = g.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * grow[j];
    }
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernels, std::span<double> out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const auto h = static_cast<std::ptrdiff_t>(g.h), w = static_cast<std::ptrdiff_t>(g.w);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto c_out = static_cast<std::int64_t>(g.c_out);
  const std::size_t work = g.output_size() * g.c_in * g.kh * g.kw;
#pragma omp parallel for schedule(static) if (work >= kParallelWork)
  for (std::int64_t cc = 0; cc < c_out; ++cc) {
    const auto co = static_cast<std::size_t>(cc);
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double s = 0.0;
        const auto y0 = static_cast<std::ptrdiff_t>(oy * g.stride) - pad;
        const auto x0 = static_cast<std::ptrdiff_t>(ox * g.stride) - pad;
        for (std::size_t ci = 0; ci < g.c_in; ++ci) {
          const double* plane = input.data() + ci * g.h * g.w;
          const double* ker = kernels.data() + (co * g.c_in + ci) * g.kh * g.kw;
          for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const auto iy = y0 + static_cast<std::ptrdiff_t>(ky);
            if (iy < 0 || iy >= h) continue;
            const double* row = plane + iy * w;
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
              const auto ix = x0 + static_cast<std::ptrdiff_t>(kx);
              if (ix < 0 || ix >= w) continue;
              s += row[ix] * ker[ky * g.kw + kx];
            }
          }
        }
        out[(co * oh + oy) * ow + ox] = s;
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> kernels, std::span<double> grad_in) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const auto h = static_cast<std::ptrdiff_t>(g.h), w = static_cast<std::ptrdiff_t>(g.w);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto c_in = static_cast<std::int64_t>(g.c_in);
  const std::size_t work = g.output_size() * g.c_in * g.kh * g.kw;
#pragma omp parallel for schedule(static) if (work >= kParallelWork)
  for (std::int64_t cc = 0; cc < c_in; ++cc) {
    const auto ci = static_cast<std::size_t>(cc);
    double* plane = grad_in.data() + ci * g.h * g.w;
    std::fill(plane, plane + g.h * g.w, 0.0);
    for (std::size_t co = 0; co < g.c_out; ++co) {
      const double* ker = kernels.data() + (co * g.c_in + ci) * g.kh * g.kw;
      const double* go = grad_out.data() + co * oh * ow;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const auto y0 = static_cast<std::ptrdiff_t>(oy * g.stride) - pad;
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double gv = go[oy * ow + ox];
          const auto x0 = static_cast<std::ptrdiff_t>(ox * g.stride) - pad;
          for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const auto iy = y0 + static_cast<std::ptrdiff_t>(ky);
            if (iy < 0 || iy >= h) continue;
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
              const auto ix = x0 + static_cast<std::ptrdiff_t>(kx);
              if (ix < 0 || ix >= w) continue;
              plane[iy * w + ix] += gv * ker[ky * g.kw + kx];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_kernels(const ConvGeometry& g, std::span<const double> grad_out,
                             std::span<const double> input, std::span<double> grad_k) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const auto h = static_cast<std::ptrdiff_t>(g.h), w = static_cast<std::ptrdiff_t>(g.w);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto c_out = static_cast<std::int64_t>(g.c_out);
  const std::size_t work = g.output_size() * g.c_in * g.kh * g.kw;
#pragma omp parallel for schedule(static) if (work >= kParallelWork)
  for (std::int64_t cc = 0; cc < c_out; ++cc) {
    const auto co = static_cast<std::size_t>(cc);
    const double* go = grad_out.data() + co * oh * ow;
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
      const double* plane = input.data() + ci * g.h * g.w;
      double* gk = grad_k.data() + (co * g.c_in + ci) * g.kh * g.kw;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          double s = 0.0;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
            if (iy < 0 || iy >= h) continue;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
              if (ix < 0 || ix >= w) continue;
              s += go[oy * ow + ox] * plane[iy * w + ix];
            }
          }
          gk[ky * g.kw + kx] = s;
        }
      }
    }
  }
}

}  // namespace muscle::kernels
