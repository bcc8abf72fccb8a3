#include <benchmark/benchmark.h>

#include <cstdio>
#include <cstring>
#include <vector>

#include "longattn/attention.hpp"
#include "longattn/kernels.hpp"
#include "longattn/rng.hpp"
#include "longattn/tensor.hpp"

namespace {

using namespace longattn;

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return Tensor(shape, random_vec(n, seed));
}

kernels::Backend backend_of(std::int64_t arg) { return arg ? kernels::Backend::OpenMP : kernels::Backend::Serial; }

void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  kernels::set_backend(backend_of(state.range(1)));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    kernels::gemm_nn(a.data(), b.data(), c.data(), n, n, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * n * n * n * state.iterations() * 1e-9, benchmark::Counter::kIsRate);
  kernels::set_backend(kernels::Backend::Serial);
}

void BM_BlockLocal(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  kernels::set_backend(backend_of(state.range(1)));
  const auto q = random_tensor({4, len, 32}, 3), k = random_tensor({4, len, 32}, 4), v = random_tensor({4, len, 32}, 5);
  const auto layout = make_block_layout(len, 64, 1, true);
  NoGradScope no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(block_local_attention(q, k, v, layout));
  kernels::set_backend(kernels::Backend::Serial);
}

void BM_Full(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  kernels::set_backend(backend_of(state.range(1)));
  const auto q = random_tensor({4, len, 32}, 3), k = random_tensor({4, len, 32}, 4), v = random_tensor({4, len, 32}, 5);
  NoGradScope no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(full_attention(q, k, v));
  kernels::set_backend(kernels::Backend::Serial);
}

BENCHMARK(BM_Gemm)->ArgNames({"n", "omp"})->ArgsProduct({{64, 256}, {0, 1}});
BENCHMARK(BM_BlockLocal)->ArgNames({"L", "omp"})->ArgsProduct({{512, 2048}, {0, 1}});
BENCHMARK(BM_Full)->ArgNames({"L", "omp"})->ArgsProduct({{512, 1024}, {0, 1}});

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

template <typename F>
bool backends_agree(F&& run) {
  kernels::set_backend(kernels::Backend::Serial);
  const auto serial = run();
  kernels::set_backend(kernels::Backend::OpenMP);
  const auto parallel = run();
  kernels::set_backend(kernels::Backend::Serial);
  return same_bits(serial, parallel);
}

bool check_backends() {
  const std::size_t m = 67, k = 45, n = 81;
  const auto a = random_vec(m * k, 7), b = random_vec(k * n, 8);
  bool ok = backends_agree([&] {
    std::vector<double> c(m * n);
    kernels::gemm_nn(a.data(), b.data(), c.data(), m, k, n, false);
    return c;
  });
  const auto q = random_tensor({2, 300, 16}, 9), kk = random_tensor({2, 300, 16}, 10), v = random_tensor({2, 300, 16}, 11);
  NoGradScope no_grad;
  ok = ok && backends_agree([&] {
    const Tensor t = block_local_attention(q, kk, v, make_block_layout(300, 32, 1, true));
    return std::vector<double>(t.data().begin(), t.data().end());
  });
  ok = ok && backends_agree([&] {
    const Tensor t = full_attention(q, kk, v);
    return std::vector<double>(t.data().begin(), t.data().end());
  });
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  const bool ok = check_backends();
  std::printf("serial/openmp bit identity: %s (threads %d)\n", ok ? "ok" : "MISMATCH", kernels::max_threads());
  if (!ok) return 1;
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
