// Serial reference vs OpenMP kernels on first-layer shaped tensors.
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>

#include "aeckit/kernels.hpp"
#include "aeckit/model.hpp"
#include "aeckit/pipeline.hpp"

using namespace aeckit;

namespace {

Tensor3<float> random_tensor(std::size_t c, std::size_t h, std::size_t w, unsigned seed) {
  Tensor3<float> t(c, h, w);
  std::mt19937 rng(seed);
  std::normal_distribution<float> g;
  for (auto& v : t.data) v = g(rng);
  return t;
}

std::vector<float> random_vec(std::size_t n, unsigned seed) {
  std::vector<float> v(n);
  std::mt19937 rng(seed);
  std::normal_distribution<float> g(0.0f, 0.1f);
  for (auto& x : v) x = g(rng);
  return v;
}

// args: in channels, out channels, frames, bins
template <bool Omp>
void conv_forward(benchmark::State& st) {
  const auto ic = static_cast<std::size_t>(st.range(0)), oc = static_cast<std::size_t>(st.range(1));
  const auto in = random_tensor(ic, st.range(2), st.range(3), 1);
  const auto w = random_vec(oc * ic * 9, 2);
  const auto b = random_vec(oc, 3);
  Tensor3<float> out;
  for (auto _ : st) {
    if constexpr (Omp)
      kernels::omp::conv3x3_forward(in, w, b, out);
    else
      kernels::serial::conv3x3_forward(in, w, b, out);
    benchmark::DoNotOptimize(out.data.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<long>(out.size() * ic * 9));
}

template <bool Omp>
void conv_backward(benchmark::State& st) {
  const auto ic = static_cast<std::size_t>(st.range(0)), oc = static_cast<std::size_t>(st.range(1));
  const auto in = random_tensor(ic, st.range(2), st.range(3), 1);
  const auto dout = random_tensor(oc, st.range(2), st.range(3), 4);
  const auto w = random_vec(oc * ic * 9, 2);
  std::vector<float> dw(w.size()), db(oc);
  Tensor3<float> din;
  for (auto _ : st) {
    if constexpr (Omp) {
      kernels::omp::conv3x3_backward_params(in, dout, dw, db);
      kernels::omp::conv3x3_backward_input(dout, w, din);
    } else {
      kernels::serial::conv3x3_backward_params(in, dout, dw, db);
      kernels::serial::conv3x3_backward_input(dout, w, din);
    }
    benchmark::DoNotOptimize(din.data.data());
  }
}

template <bool Omp>
void pool_relu(benchmark::State& st) {
  const auto in = random_tensor(st.range(0), st.range(1), st.range(2), 5);
  Tensor3<float> act, pooled;
  std::vector<std::uint32_t> am;
  for (auto _ : st) {
    if constexpr (Omp) {
      kernels::omp::leaky_relu_forward(in, 0.01f, act);
      kernels::omp::maxpool2x2_forward(act, pooled, am);
    } else {
      kernels::serial::leaky_relu_forward(in, 0.01f, act);
      kernels::serial::maxpool2x2_forward(act, pooled, am);
    }
    benchmark::DoNotOptimize(pooled.data.data());
  }
}

void full_forward(benchmark::State& st) {
  const auto ckpt = init_model(ModelConfig{});
  auto fb = random_tensor(3, 541, 257, 6);
  for (auto& v : fb.data) v = -10.0f + 8.0f * v;
  for (auto _ : st) benchmark::DoNotOptimize(forward(ckpt, fb).mos);
}

}  // namespace

BENCHMARK(conv_forward<false>)->Name("conv_forward/serial")->Args({3, 32, 541, 257})->Args({64, 128, 67, 32})->Unit(benchmark::kMillisecond);
BENCHMARK(conv_forward<true>)->Name("conv_forward/omp")->Args({3, 32, 541, 257})->Args({64, 128, 67, 32})->Unit(benchmark::kMillisecond);
BENCHMARK(conv_backward<false>)->Name("conv_backward/serial")->Args({32, 64, 270, 128})->Unit(benchmark::kMillisecond);
BENCHMARK(conv_backward<true>)->Name("conv_backward/omp")->Args({32, 64, 270, 128})->Unit(benchmark::kMillisecond);
BENCHMARK(pool_relu<false>)->Name("relu_pool/serial")->Args({32, 541, 257})->Unit(benchmark::kMillisecond);
BENCHMARK(pool_relu<true>)->Name("relu_pool/omp")->Args({32, 541, 257})->Unit(benchmark::kMillisecond);
BENCHMARK(full_forward)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
