// Serial reference kernels vs the OpenMP ones. Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include "../tests/support.hpp"
#include "texmax/conv.hpp"
#include "texmax/descriptor.hpp"
#include "texmax/reference.hpp"

using namespace texmax;

namespace {

// args: spatial size, channels (in == out), 3x3 kernels
struct ConvCase {
    Tensor3 x, g;
    ConvLayerSpec layer;
    explicit ConvCase(const benchmark::State& s) {
        const auto n = static_cast<std::size_t>(s.range(0)), c = static_cast<std::size_t>(s.range(1));
        x = testing::random_tensor(n, n, c, 1);
        layer = testing::random_conv(c, c, 3, 1, 1, Activation::relu, 2);
        g = testing::random_tensor(n, n, c, 3);
    }
};

void BM_conv_forward_reference(benchmark::State& s) {
    ConvCase k(s);
    for (auto _ : s) benchmark::DoNotOptimize(reference::conv2d_forward(k.x, k.layer));
}

void BM_conv_forward_openmp(benchmark::State& s) {
    ConvCase k(s);
    for (auto _ : s) benchmark::DoNotOptimize(conv2d_forward(k.x, k.layer));
}

void BM_conv_backward_reference(benchmark::State& s) {
    ConvCase k(s);
    for (auto _ : s) benchmark::DoNotOptimize(reference::conv2d_backward(k.x, k.layer, k.g));
}

void BM_conv_backward_openmp(benchmark::State& s) {
    ConvCase k(s);
    for (auto _ : s) benchmark::DoNotOptimize(conv2d_backward(k.x, k.layer, k.g));
}

void BM_second_moment_reference(benchmark::State& s) {
    const auto n = static_cast<std::size_t>(s.range(0)), c = static_cast<std::size_t>(s.range(1));
    const Tensor3 f = testing::random_tensor(n, n, c, 4);
    for (auto _ : s) benchmark::DoNotOptimize(reference::second_moment(f));
}

void BM_second_moment_openmp(benchmark::State& s) {
    const auto n = static_cast<std::size_t>(s.range(0)), c = static_cast<std::size_t>(s.range(1));
    const Tensor3 f = testing::random_tensor(n, n, c, 4);
    for (auto _ : s) benchmark::DoNotOptimize(pool_second_order(f));
}

}  // namespace

BENCHMARK(BM_conv_forward_reference)->Args({32, 8})->Args({64, 16})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv_forward_openmp)->Args({32, 8})->Args({64, 16})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv_backward_reference)->Args({32, 8})->Args({64, 16})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv_backward_openmp)->Args({32, 8})->Args({64, 16})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_second_moment_reference)->Args({32, 16})->Args({16, 32})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_second_moment_openmp)->Args({32, 16})->Args({16, 32})->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
