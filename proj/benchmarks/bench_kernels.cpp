#include <benchmark/benchmark.h>

#include <random>

#include "bitgrad/bit_tensor.hpp"
#include "bitgrad/kernels.hpp"

using namespace bitgrad;

namespace {

Tensor random_signs(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    Tensor t({rows, cols});
    for (float& v : t.storage()) v = coin(rng) ? 1.0f : -1.0f;
    return t;
}

Tensor random_image(std::vector<std::size_t> dims, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> n;
    Tensor t(std::move(dims));
    for (float& v : t.storage()) v = n(rng);
    return t;
}

// m x k times (n x k)^T, the shape of a conv layer after im2col.
void BM_FloatGemm(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const auto n = static_cast<std::size_t>(state.range(1));
    const auto k = static_cast<std::size_t>(state.range(2));
    const Tensor a = random_signs(m, k, 1);
    const Tensor b = random_signs(n, k, 2);
    Tensor c({m, n});
    for (auto _ : state) {
        gemm<float>(Trans::No, Trans::Yes, m, n, k, 1.0f, a.data().data(), k, b.data().data(), k, 0.0f,
                    c.storage().data(), n);
        benchmark::DoNotOptimize(c.storage().data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * n * k));
}

void BM_XnorGemm(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const auto n = static_cast<std::size_t>(state.range(1));
    const auto k = static_cast<std::size_t>(state.range(2));
    const BitTensor a = pack(random_signs(m, k, 1), PadRole::Input);
    const BitTensor b = pack(random_signs(n, k, 2), PadRole::Weight);
    std::vector<float> c(m * n);
    for (auto _ : state) {
        xnor_gemm(a, b, OffsetMode::Explicit, k, c);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * n * k));
}

void BM_Pack(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    const auto k = static_cast<std::size_t>(state.range(1));
    const Tensor a = random_signs(rows, k, 3);
    for (auto _ : state) benchmark::DoNotOptimize(pack(a, PadRole::Input));
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * rows * k * sizeof(float)));
}

// One 3x3, 128 -> 128 layer on a 16x16 map.
void BM_FloatConv(benchmark::State& state) {
    const Tensor x = random_image({1, 128, 16, 16}, 4);
    const Tensor w = random_signs(128, 128 * 9, 5);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, {3, 3, 1, 1}, 1.0f));
}

void BM_BinaryConv(benchmark::State& state) {
    const Tensor x = random_image({1, 128, 16, 16}, 4);
    const BitTensor w = pack(random_signs(128, 128 * 9, 5), PadRole::Weight);
    std::vector<float> out(128 * 16 * 16);
    for (auto _ : state) {
        binary_conv_signs(x, w, {3, 3, 1, 1}, OffsetMode::Explicit, out);
        benchmark::DoNotOptimize(out.data());
    }
}

}  // namespace

BENCHMARK(BM_FloatGemm)->Args({256, 64, 576})->Args({256, 128, 1152})->Args({64, 256, 4096});
BENCHMARK(BM_XnorGemm)->Args({256, 64, 576})->Args({256, 128, 1152})->Args({64, 256, 4096});
BENCHMARK(BM_Pack)->Args({256, 1152});
BENCHMARK(BM_FloatConv);
BENCHMARK(BM_BinaryConv);
BENCHMARK_MAIN();
