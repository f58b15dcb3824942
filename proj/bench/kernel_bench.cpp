// Parallel kernels against the serial reference, plus one full training
// step of the desk model.
#include <random>

#include <benchmark/benchmark.h>

#include "surgseg/kernels.hpp"
#include "surgseg/trainer.hpp"
#include "surgseg/unet.hpp"

namespace surgseg {
namespace {

Tensor4<float> random_tensor(int n, int c, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  Tensor4<float> t(n, c, h, w);
  for (auto& v : t.data) v = d(rng);
  return t;
}

std::vector<float> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Args: channels in, channels out, spatial size. Batch 8.
template <bool kReference>
void BM_ConvForward(benchmark::State& state) {
  const int cin = static_cast<int>(state.range(0));
  const int cout = static_cast<int>(state.range(1));
  const int hw = static_cast<int>(state.range(2));
  const auto in = random_tensor(8, cin, hw, hw, 1);
  const auto w = random_vector(static_cast<std::size_t>(cout) * cin * 9, 2);
  const auto b = random_vector(static_cast<std::size_t>(cout), 3);
  Tensor4<float> out;
  for (auto _ : state) {
    if constexpr (kReference) {
      kernels::reference::conv2d_forward<float>(in, w, b, cout, 3, out);
    } else {
      kernels::conv2d_forward<float>(in, w, b, cout, 3, out);
    }
    benchmark::DoNotOptimize(out.data.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * 8 * hw * hw * cin * cout * 9 * state.iterations(),
                                                 benchmark::Counter::kIsRate, benchmark::Counter::kIs1000);
}

template <bool kReference>
void BM_ConvBackwardInput(benchmark::State& state) {
  const int cin = static_cast<int>(state.range(0));
  const int cout = static_cast<int>(state.range(1));
  const int hw = static_cast<int>(state.range(2));
  const auto g = random_tensor(8, cout, hw, hw, 4);
  const auto w = random_vector(static_cast<std::size_t>(cout) * cin * 9, 5);
  Tensor4<float> gi;
  for (auto _ : state) {
    if constexpr (kReference) {
      kernels::reference::conv2d_backward_input<float>(g, w, cin, 3, gi);
    } else {
      kernels::conv2d_backward_input<float>(g, w, cin, 3, gi);
    }
    benchmark::DoNotOptimize(gi.data.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * 8 * hw * hw * cin * cout * 9 * state.iterations(),
                                                 benchmark::Counter::kIsRate, benchmark::Counter::kIs1000);
}

template <bool kReference>
void BM_ConvBackwardParams(benchmark::State& state) {
  const int cin = static_cast<int>(state.range(0));
  const int cout = static_cast<int>(state.range(1));
  const int hw = static_cast<int>(state.range(2));
  const auto in = random_tensor(8, cin, hw, hw, 6);
  const auto g = random_tensor(8, cout, hw, hw, 7);
  std::vector<float> gw(static_cast<std::size_t>(cout) * cin * 9), gb(static_cast<std::size_t>(cout));
  for (auto _ : state) {
    if constexpr (kReference) {
      kernels::reference::conv2d_backward_params<float>(in, g, 3, gw, gb);
    } else {
      kernels::conv2d_backward_params<float>(in, g, 3, gw, gb);
    }
    benchmark::DoNotOptimize(gw.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * 8 * hw * hw * cin * cout * 9 * state.iterations(),
                                                 benchmark::Counter::kIsRate, benchmark::Counter::kIs1000);
}

void conv_shapes(benchmark::internal::Benchmark* b) {
  b->Args({3, 8, 64})->Args({8, 8, 64})->Args({16, 16, 32})->Args({32, 32, 16})->Args({64, 64, 8});
  b->Unit(benchmark::kMicrosecond);
}

BENCHMARK(BM_ConvForward<false>)->Apply(conv_shapes);
BENCHMARK(BM_ConvForward<true>)->Apply(conv_shapes);
BENCHMARK(BM_ConvBackwardInput<false>)->Apply(conv_shapes);
BENCHMARK(BM_ConvBackwardInput<true>)->Apply(conv_shapes);
BENCHMARK(BM_ConvBackwardParams<false>)->Apply(conv_shapes);
BENCHMARK(BM_ConvBackwardParams<true>)->Apply(conv_shapes);

void BM_TrainStep(benchmark::State& state) {
  UNetConfig c = UNetConfig::desk();
  c.num_classes = 6;
  UNet model(c);
  const int batch = TrainConfig::desk().batch_size;
  auto input = random_tensor(batch, 3, c.height, c.width, 8);
  Tensor4<float> target(batch, 6, c.height, c.width, 0.0f);
  for (std::size_t i = 0; i < target.plane(); ++i) target.data[5 * target.plane() + i] = 1.0f;
  Tensor4<float> grad;
  for (auto _ : state) {
    model.zero_grad();
    mse_onehot_loss(model.forward_train(input), target, &grad);
    model.backward(grad);
    benchmark::DoNotOptimize(model.gradients().data());
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace surgseg

BENCHMARK_MAIN();
