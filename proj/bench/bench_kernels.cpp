// Serial reference kernels against the OpenMP ones. On a single core the
// two should be within noise; the gap opens with more threads.

#include <benchmark/benchmark.h>

#include "pfcl/linalg.hpp"
#include "pfcl/nn.hpp"

namespace {

pfcl::Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  pfcl::Rng rng(seed);
  pfcl::Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

template <pfcl::Matrix (*Kernel)(const pfcl::Matrix&, const pfcl::Matrix&)>
void BM_square(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const pfcl::Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

// Weight-gradient shape of a hidden layer: (batch x in)ᵀ (batch x out).
template <pfcl::Matrix (*Kernel)(const pfcl::Matrix&, const pfcl::Matrix&)>
void BM_weight_grad(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const pfcl::Matrix x = random_matrix(batch, 256, 3), d = random_matrix(batch, 100, 4);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(x, d));
}

void BM_forward(benchmark::State& state) {
  pfcl::Rng rng(5);
  const std::size_t dims[] = {256, 100, 100, 10};
  pfcl::MlpModel model(dims, rng);
  const pfcl::Matrix x = random_matrix(static_cast<std::size_t>(state.range(0)), 256, 6);
  for (auto _ : state) benchmark::DoNotOptimize(pfcl::forward(model, x));
}

}  // namespace

BENCHMARK_TEMPLATE(BM_square, pfcl::serial::matmul)->Name("matmul/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK_TEMPLATE(BM_square, pfcl::matmul)->Name("matmul/openmp")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK_TEMPLATE(BM_weight_grad, pfcl::serial::matmul_tn)->Name("matmul_tn/serial")->Arg(64)->Arg(512);
BENCHMARK_TEMPLATE(BM_weight_grad, pfcl::matmul_tn)->Name("matmul_tn/openmp")->Arg(64)->Arg(512);
BENCHMARK(BM_forward)->Arg(64)->Arg(512);

BENCHMARK_MAIN();
