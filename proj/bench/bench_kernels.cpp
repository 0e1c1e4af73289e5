// Serial reference kernels against their OpenMP versions.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "rrda/kernels.hpp"

namespace {

using namespace rrda;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (double& v : m.values()) v = normal(rng);
  return m;
}

template <auto Kernel>
void BM_matmul_transposed(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 64, 1), b = random_matrix(64, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(a, b, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <auto Kernel>
void BM_assign_nearest(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix points = random_matrix(n, 16, 3), centroids = random_matrix(15, 16, 4);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(points, centroids));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <auto Kernel>
void BM_knn_cosine(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix bank = random_matrix(n, 16, 5), queries = random_matrix(64, 16, 6);
  const std::vector<std::size_t> exclude(queries.rows(), std::numeric_limits<std::size_t>::max());
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(queries, bank, 3, exclude));
  state.SetItemsProcessed(state.iterations() * 64);
}

}  // namespace

BENCHMARK(BM_matmul_transposed<kernels::serial::matmul_transposed>)->Name("matmul_transposed/serial")->Range(256, 16384);
BENCHMARK(BM_matmul_transposed<kernels::parallel::matmul_transposed>)->Name("matmul_transposed/parallel")->Range(256, 16384);
BENCHMARK(BM_assign_nearest<kernels::serial::assign_nearest>)->Name("assign_nearest/serial")->Range(1024, 65536);
BENCHMARK(BM_assign_nearest<kernels::parallel::assign_nearest>)->Name("assign_nearest/parallel")->Range(1024, 65536);
BENCHMARK(BM_knn_cosine<kernels::serial::knn_cosine>)->Name("knn_cosine/serial")->Range(1024, 16384);
BENCHMARK(BM_knn_cosine<kernels::parallel::knn_cosine>)->Name("knn_cosine/parallel")->Range(1024, 16384);

BENCHMARK_MAIN();
