#include "bitgrad/verify.hpp"

#include <chrono>
#include <random>

#include "bitgrad/bit_tensor.hpp"
#include "bitgrad/kernels.hpp"

namespace bitgrad {

std::size_t XnorReport::mismatches() const noexcept {
    std::size_t n = 0;
    for (const XnorCheck& r : rows) n += r.explicit_mismatches + r.learned_mismatches;
    return n;
}

std::vector<std::size_t> default_check_lengths() { return {1, 7, 63, 64, 65, 100, 1152, 4096}; }

XnorReport check_xnor_equivalence(std::span<const std::size_t> lengths, std::size_t trials, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    XnorReport report;
    for (std::size_t k : lengths) {
        XnorCheck row;
        row.k = k;
        row.trials = trials;
        std::vector<float> a(k);
        std::vector<float> b(k);
        float explicit_out = 0.0f;
        float learned_out = 0.0f;
        for (std::size_t t = 0; t < trials; ++t) {
            for (std::size_t i = 0; i < k; ++i) {
                a[i] = coin(rng) ? 1.0f : -1.0f;
                b[i] = coin(rng) ? 1.0f : -1.0f;
            }
            float dot = 0.0f;
            for (std::size_t i = 0; i < k; ++i) dot += a[i] * b[i];
            const BitTensor pa = pack(a, 1, k, PadRole::Input);
            const BitTensor pb = pack(b, 1, k, PadRole::Weight);
            xnor_gemm(pa, pb, OffsetMode::Explicit, k, {&explicit_out, 1});
            xnor_gemm(pa, pb, OffsetMode::Learned, k, {&learned_out, 1});
            row.explicit_mismatches += explicit_out != dot;
            row.learned_mismatches += 2.0f * learned_out - static_cast<float>(k) != explicit_out;
        }
        report.rows.push_back(row);
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace bitgrad
