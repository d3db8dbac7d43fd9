#include <benchmark/benchmark.h>

#include <random>

#include "autoroute/kernels.hpp"

namespace {

using autoroute::Matrix;
namespace k = autoroute::kernels;

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    Matrix m(r, c);
    for (double& v : m.values()) v = u(rng);
    return m;
}

// Batch x width shapes as they occur in training: (batch, in) * (in, out).
template <Matrix (*F)(const Matrix&, const Matrix&)>
void bm_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0)), w = static_cast<std::size_t>(state.range(1));
    const Matrix a = random_matrix(n, w, 1), b = random_matrix(w, w, 2);
    for (auto _ : state) benchmark::DoNotOptimize(F(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(n * w * w));
}

// Weight gradient: x^T * dy.
template <Matrix (*F)(const Matrix&, const Matrix&)>
void bm_matmul_tn(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0)), w = static_cast<std::size_t>(state.range(1));
    const Matrix a = random_matrix(n, w, 1), b = random_matrix(n, w, 2);
    for (auto _ : state) benchmark::DoNotOptimize(F(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(n * w * w));
}

// Input gradient: dy * W^T.
template <Matrix (*F)(const Matrix&, const Matrix&)>
void bm_matmul_nt(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0)), w = static_cast<std::size_t>(state.range(1));
    const Matrix a = random_matrix(n, w, 1), b = random_matrix(w, w, 2);
    for (auto _ : state) benchmark::DoNotOptimize(F(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(n * w * w));
}

void shapes(benchmark::internal::Benchmark* b) {
    for (long n : {64, 800, 10000})
        for (long w : {16, 64}) b->Args({n, w});
}

}  // namespace

BENCHMARK(bm_matmul<k::serial::matmul>)->Name("matmul/serial")->Apply(shapes);
BENCHMARK(bm_matmul<k::parallel::matmul>)->Name("matmul/parallel")->Apply(shapes);
BENCHMARK(bm_matmul_tn<k::serial::matmul_tn>)->Name("matmul_tn/serial")->Apply(shapes);
BENCHMARK(bm_matmul_tn<k::parallel::matmul_tn>)->Name("matmul_tn/parallel")->Apply(shapes);
BENCHMARK(bm_matmul_nt<k::serial::matmul_nt>)->Name("matmul_nt/serial")->Apply(shapes);
BENCHMARK(bm_matmul_nt<k::parallel::matmul_nt>)->Name("matmul_nt/parallel")->Apply(shapes);

BENCHMARK_MAIN();
