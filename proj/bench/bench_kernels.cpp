// Serial reference vs OpenMP conv kernels on the layer shapes the networks use.

#include <benchmark/benchmark.h>

#include <vector>

#include "ldgan/kernels.hpp"
#include "ldgan/rng.hpp"

using namespace ldgan;

namespace {

// batch, in, side, out, kernel, stride, pad
ConvGeometry geometry(const benchmark::State& s) {
  const auto a = [&](int k) { return static_cast<std::size_t>(s.range(k)); };
  return {a(0), a(1), a(2), a(2), a(3), a(4), a(4), a(5), a(6)};
}

std::vector<float> random(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

template <typename Conv>
void forward(benchmark::State& s, Conv conv) {
  const auto g = geometry(s);
  const auto x = random(g.input_size(), 1), w = random(g.weight_size(), 2);
  std::vector<float> y(g.output_size());
  for (auto _ : s) {
    conv(g, x, w, y);
    benchmark::DoNotOptimize(y.data());
  }
  s.SetItemsProcessed(static_cast<std::int64_t>(s.iterations() * g.output_size()));
}

template <typename Grad>
void grad_input(benchmark::State& s, Grad grad) {
  const auto g = geometry(s);
  const auto dy = random(g.output_size(), 3), w = random(g.weight_size(), 2);
  std::vector<float> dx(g.input_size());
  for (auto _ : s) {
    grad(g, dy, w, dx);
    benchmark::DoNotOptimize(dx.data());
  }
}

template <typename Grad>
void grad_weight(benchmark::State& s, Grad grad) {
  const auto g = geometry(s);
  const auto x = random(g.input_size(), 1), dy = random(g.output_size(), 3);
  std::vector<float> dw(g.weight_size());
  for (auto _ : s) {
    grad(g, x, dy, dw);
    benchmark::DoNotOptimize(dw.data());
  }
}

void shapes(benchmark::internal::Benchmark* b) {
  b->ArgNames({"B", "C", "HW", "O", "K", "S", "P"});
  b->Args({8, 48, 32, 48, 3, 1, 1});   // autoencoder 3x3
  b->Args({16, 32, 16, 64, 4, 2, 1});  // discriminator 4x4 stride 2
  b->Args({8, 64, 16, 64, 3, 1, 1});   // recovery fuse
  b->Unit(benchmark::kMicrosecond);
}

void BM_conv2d_serial(benchmark::State& s) { forward(s, kernels::serial::conv2d<float>); }
void BM_conv2d_parallel(benchmark::State& s) { forward(s, kernels::parallel::conv2d<float>); }
void BM_grad_input_serial(benchmark::State& s) { grad_input(s, kernels::serial::conv2d_grad_input<float>); }
void BM_grad_input_parallel(benchmark::State& s) { grad_input(s, kernels::parallel::conv2d_grad_input<float>); }
void BM_grad_weight_serial(benchmark::State& s) { grad_weight(s, kernels::serial::conv2d_grad_weight<float>); }
void BM_grad_weight_parallel(benchmark::State& s) { grad_weight(s, kernels::parallel::conv2d_grad_weight<float>); }

}  // namespace

BENCHMARK(BM_conv2d_serial)->Apply(shapes);
BENCHMARK(BM_conv2d_parallel)->Apply(shapes);
BENCHMARK(BM_grad_input_serial)->Apply(shapes);
BENCHMARK(BM_grad_input_parallel)->Apply(shapes);
BENCHMARK(BM_grad_weight_serial)->Apply(shapes);
BENCHMARK(BM_grad_weight_parallel)->Apply(shapes);

int main(int argc, char** argv) {
  configure_threads_from_env();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
