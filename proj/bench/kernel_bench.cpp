// SPDX-License-Identifier: Apache-2.0
//
// OpenMP kernels against their serial references, plus one training step
// at several thread counts. Run with --benchmark_filter to pick a family.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <random>
#include <vector>

#include "muscle/kernels.hpp"
#include "muscle/train.hpp"

namespace k = muscle::kernels;

namespace {

std::vector<double> filled(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void bm_matmul(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto a = filled(n * n, 1), b = filled(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : st) {
    if constexpr (Parallel)
      k::matmul(a, b, c, n, n, n);
    else
      k::serial::matmul(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * 2 * n * n * n));
}

// Geometries of the default encoder at 32×32, plus one larger layer.
k::ConvGeometry geometry(int which) {
  switch (which) {
    case 0: return {1, 32, 32, 8, 3, 3, 2, 1};
    case 1: return {8, 16, 16, 16, 3, 3, 2, 1};
    case 2: return {16, 8, 8, 32, 3, 3, 2, 1};
    default: return {16, 64, 64, 32, 3, 3, 1, 1};
  }
}

enum class Pass { forward, grad_input, grad_kernels };

template <bool Parallel, Pass P>
void bm_conv(benchmark::State& st) {
  const auto g = geometry(static_cast<int>(st.range(0)));
  const auto in = filled(g.input_size(), 3), ker = filled(g.kernel_size(), 4), gout = filled(g.output_size(), 5);
  std::vector<double> out(g.output_size()), gin(g.input_size()), gk(g.kernel_size());
  for (auto _ : st) {
    if constexpr (P == Pass::forward) {
      if constexpr (Parallel)
        k::conv2d_forward(g, in, ker, out);
      else
        k::serial::conv2d_forward(g, in, ker, out);
      benchmark::DoNotOptimize(out.data());
    } else if constexpr (P == Pass::grad_input) {
      if constexpr (Parallel)
        k::conv2d_backward_input(g, gout, ker, gin);
      else
        k::serial::conv2d_backward_input(g, gout, ker, gin);
      benchmark::DoNotOptimize(gin.data());
    } else {
      if constexpr (Parallel)
        k::conv2d_backward_kernels(g, gout, in, gk);
      else
        k::serial::conv2d_backward_kernels(g, gout, in, gk);
      benchmark::DoNotOptimize(gk.data());
    }
  }
}

// One classification batch of 16 through the default encoder; the argument
// is the OpenMP thread count.
void bm_batch_gradients(benchmark::State& st) {
  const int threads = static_cast<int>(st.range(0));
  muscle::EncoderConfig enc;
  muscle::HeadConfig head;
  auto rng = muscle::make_rng(7);
  const auto bb = muscle::init_encoder(enc, rng);
  const auto hp = muscle::init_head(head, enc, rng);
  std::vector<muscle::Sample> data(16);
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i].image = muscle::Tensor({1, enc.input_h, enc.input_w}, filled(enc.input_h * enc.input_w, 10 + i));
    data[i].label = static_cast<int>(i % 2);
  }
  std::vector<const muscle::Sample*> batch;
  for (const auto& s : data) batch.push_back(&s);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(threads);
  for (auto _ : st) {
    auto g = muscle::batch_gradients(enc, head, bb, hp, batch);
    benchmark::DoNotOptimize(g.loss);
  }
  omp_set_num_threads(saved);
}

}  // namespace

BENCHMARK(bm_matmul<false>)->Name("matmul/serial")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(bm_matmul<true>)->Name("matmul/omp")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(bm_conv<false, Pass::forward>)->Name("conv_fwd/serial")->DenseRange(0, 3);
BENCHMARK(bm_conv<true, Pass::forward>)->Name("conv_fwd/omp")->DenseRange(0, 3);
BENCHMARK(bm_conv<false, Pass::grad_input>)->Name("conv_dinput/serial")->DenseRange(0, 3);
BENCHMARK(bm_conv<true, Pass::grad_input>)->Name("conv_dinput/omp")->DenseRange(0, 3);
BENCHMARK(bm_conv<false, Pass::grad_kernels>)->Name("conv_dkernel/serial")->DenseRange(0, 3);
BENCHMARK(bm_conv<true, Pass::grad_kernels>)->Name("conv_dkernel/omp")->DenseRange(0, 3);
BENCHMARK(bm_batch_gradients)->Name("batch_gradients/threads")->Arg(1)->Arg(2)->Arg(4)->UseRealTime();

BENCHMARK_MAIN();
