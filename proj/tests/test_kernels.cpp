#include <gtest/gtest.h>

#include <random>

#include "bitgrad/bit_tensor.hpp"
#include "bitgrad/error.hpp"
#include "bitgrad/kernels.hpp"
#include "support.hpp"

using namespace bitgrad;

namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows();
    const std::size_t k = a.cols();
    const std::size_t n = b.cols();
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += static_cast<double>(a[i * k + p]) * b[p * n + j];
            c[i * n + j] = static_cast<float>(acc);
        }
    }
    return c;
}

// Direct nested-loop convolution with zero padding; weights F,C,kh,kw.
Tensor direct_conv(const Tensor& x, const Tensor& w, std::size_t filters, const ConvGeometry& g, float pad_value) {
    const Shape s = x.shape();
    const std::size_t oh = (s.h + 2 * g.pad - g.kh) / g.stride + 1;
    const std::size_t ow = (s.w + 2 * g.pad - g.kw) / g.stride + 1;
    Tensor y({s.n, filters, oh, ow});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t f = 0; f < filters; ++f)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < s.c; ++c)
                        for (std::size_t ky = 0; ky < g.kh; ++ky)
                            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                                const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                                const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                                const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(s.h) &&
                                                    ix < static_cast<long>(s.w);
                                const float v = inside ? x.at(n, c, static_cast<std::size_t>(iy),
                                                              static_cast<std::size_t>(ix))
                                                       : pad_value;
                                acc += static_cast<double>(v) * w[((f * s.c + c) * g.kh + ky) * g.kw + kx];
                            }
                    y.at(n, f, oy, ox) = static_cast<float>(acc);
                }
    return y;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an error";
    return ErrorCode::Io;
}

}  // namespace

TEST(FloatGemm, HandExamples) {
    EXPECT_EQ(float_gemm(Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(2, 1, {3, 4})), Tensor::matrix(1, 1, {11}));
    std::mt19937_64 rng(2);
    const Tensor a = testkit::random_tensor({4, 4}, rng);
    const Tensor eye = Tensor::matrix(4, 4, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
    EXPECT_EQ(float_gemm(eye, a), a);
    EXPECT_EQ(code_of([&] { float_gemm(Tensor({2, 3}), Tensor({2, 3})); }), ErrorCode::ShapeMismatch);
}

TEST(FloatGemm, MatchesNaiveLoop) {
    std::mt19937_64 rng(3);
    const Tensor a = testkit::random_tensor({5, 7}, rng);
    const Tensor b = testkit::random_tensor({7, 3}, rng);
    const Tensor c = float_gemm(a, b);
    const Tensor ref = naive_matmul(a, b);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], ref[i], 1e-5 * std::max(1.0f, std::fabs(ref[i])));
}

TEST(FloatGemm, TransposedOperandsAndBeta) {
    std::mt19937_64 rng(4);
    const std::size_t m = 6, n = 5, k = 9;
    const Tensor a = testkit::random_tensor({m, k}, rng);
    const Tensor b = testkit::random_tensor({k, n}, rng);
    Tensor at({k, m});
    Tensor bt({n, k});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
    const Tensor ref = naive_matmul(a, b);
    for (auto ta : {Trans::No, Trans::Yes}) {
        for (auto tb : {Trans::No, Trans::Yes}) {
            const Tensor& aa = ta == Trans::No ? a : at;
            const Tensor& bb = tb == Trans::No ? b : bt;
            Tensor c({m, n}, 1.0f);
            gemm<float>(ta, tb, m, n, k, 2.0f, aa.data().data(), aa.cols(), bb.data().data(), bb.cols(), 0.5f,
                        c.data().data(), n);
            for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], 2.0f * ref[i] + 0.5f, 1e-5);
        }
    }
}

TEST(XnorGemm, HandExamples) {
    const BitTensor x = pack(Tensor::vector({1, -1, 1, -1}), PadRole::Input);
    const BitTensor w = pack(Tensor::vector({1, 1, -1, -1}), PadRole::Weight);
    EXPECT_EQ(xnor_gemm(x, w, OffsetMode::Explicit, 4)[0], 0.0f);
    EXPECT_EQ(xnor_gemm(x, w, OffsetMode::Learned, 4)[0], 2.0f);
    const BitTensor ones_in = pack(Tensor::vector({1, 1, 1}), PadRole::Input);
    const BitTensor ones_w = pack(Tensor::vector({1, 1, 1}), PadRole::Weight);
    EXPECT_EQ(xnor_gemm(ones_in, ones_w, OffsetMode::Explicit, 3)[0], 3.0f);
}

TEST(XnorGemm, LengthMismatch) {
    const BitTensor x = pack(Tensor::vector({1, -1, 1}), PadRole::Input);
    const BitTensor w = pack(Tensor::vector({1, 1}), PadRole::Weight);
    EXPECT_EQ(code_of([&] { xnor_gemm(x, w, OffsetMode::Explicit, 3); }), ErrorCode::LengthMismatch);
}

TEST(XnorGemm, BitExactAgainstFloatGemmAcrossLengths) {
    std::mt19937_64 rng(5);
    for (std::size_t k : {1u, 2u, 7u, 31u, 63u, 64u, 65u, 100u, 127u, 128u, 129u, 575u, 1152u, 2049u, 4096u}) {
        const Tensor a = testkit::sign_tensor({6, k}, rng);
        const Tensor b = testkit::sign_tensor({5, k}, rng);
        Tensor bt({k, 5});
        for (std::size_t j = 0; j < 5; ++j)
            for (std::size_t p = 0; p < k; ++p) bt[p * 5 + j] = b[j * k + p];
        const Tensor ref = float_gemm(a, bt);
        const Tensor ex = xnor_gemm(pack(a, PadRole::Input), pack(b, PadRole::Weight), OffsetMode::Explicit, k);
        const Tensor le = xnor_gemm(pack(a, PadRole::Input), pack(b, PadRole::Weight), OffsetMode::Learned, k);
        for (std::size_t i = 0; i < ex.size(); ++i) {
            ASSERT_EQ(ex[i], ref[i]) << "k=" << k;
            ASSERT_EQ(2.0f * le[i] - static_cast<float>(k), ex[i]) << "k=" << k;
            // Output = k - 2 * disagreements, so it shares k's parity.
            ASSERT_EQ((static_cast<long>(ex[i]) - static_cast<long>(k)) % 2, 0);
        }
    }
}

TEST(XnorGemm, EqualRolesAreCorrectedForPadding) {
    std::mt19937_64 rng(6);
    const std::size_t k = 70;
    const Tensor a = testkit::sign_tensor({3, k}, rng);
    const Tensor b = testkit::sign_tensor({4, k}, rng);
    const Tensor mixed = xnor_gemm(pack(a, PadRole::Input), pack(b, PadRole::Weight), OffsetMode::Explicit, k);
    const Tensor same = xnor_gemm(pack(a, PadRole::Input), pack(b, PadRole::Input), OffsetMode::Explicit, k);
    EXPECT_EQ(mixed, same);
}

TEST(Im2col, HandExamples) {
    Tensor x({1, 1, 3, 3});
    for (std::size_t i = 0; i < 9; ++i) x[i] = static_cast<float>(i + 1);
    const Tensor col = im2col(x, {3, 3, 1, 0});
    ASSERT_EQ(col.dims(), (std::vector<std::size_t>{1, 9}));
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(col[i], x[i]);

    const Tensor ones({1, 1, 2, 2}, 1.0f);
    const Tensor c1 = im2col(ones, {1, 1, 1, 0});
    ASSERT_EQ(c1.dims(), (std::vector<std::size_t>{4, 1}));
    for (float v : c1.data()) EXPECT_EQ(v, 1.0f);
}

TEST(Im2col, PaddingValue) {
    const Tensor x({1, 1, 1, 1}, 5.0f);
    const Tensor col = im2col(x, {3, 3, 1, 1}, 1.0f);
    ASSERT_EQ(col.size(), 9u);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(col[i], i == 4 ? 5.0f : 1.0f);
}

TEST(Im2col, InvalidGeometry) {
    EXPECT_EQ(code_of([] { im2col(Tensor({1, 1, 2, 2}), {3, 3, 1, 0}); }), ErrorCode::InvalidGeometry);
    EXPECT_EQ(code_of([] { im2col(Tensor({1, 1, 4, 4}), {3, 3, 0, 0}); }), ErrorCode::InvalidGeometry);
}

TEST(Conv2d, MatchesDirectConvolution) {
    std::mt19937_64 rng(8);
    struct Case {
        std::vector<std::size_t> in;
        std::size_t filters;
        ConvGeometry g;
    };
    const std::vector<Case> cases{
        {{2, 3, 8, 8}, 4, {3, 3, 2, 1}},
        {{1, 2, 7, 5}, 3, {3, 3, 1, 1}},
        {{2, 1, 6, 6}, 2, {5, 5, 1, 2}},
        {{1, 4, 5, 5}, 6, {1, 1, 1, 0}},
        {{1, 2, 9, 9}, 2, {7, 7, 2, 3}},
    };
    for (const Case& c : cases) {
        const Tensor x = testkit::random_tensor(c.in, rng);
        const Tensor w = testkit::random_tensor({c.filters, c.in[1], c.g.kh, c.g.kw}, rng);
        const Tensor y = conv2d(x, w, c.g);
        const Tensor ref = direct_conv(x, w, c.filters, c.g, 0.0f);
        ASSERT_EQ(y.dims(), ref.dims());
        for (std::size_t i = 0; i < y.size(); ++i) {
            ASSERT_NEAR(y[i], ref[i], 1e-5 * std::max(1.0f, std::fabs(ref[i])));
        }
    }
}

TEST(BinaryConvPacked, AllPlusWeightsOneByOneSumsChannels) {
    std::mt19937_64 rng(9);
    const Tensor x = testkit::sign_tensor({2, 5, 3, 4}, rng);
    const BitTensor w = pack(Tensor({1, 5}, 1.0f), PadRole::Weight);
    const Tensor y = binary_conv_packed(x, w, {1, 1, 1, 0}, OffsetMode::Explicit);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t h = 0; h < 3; ++h)
            for (std::size_t ww = 0; ww < 4; ++ww) {
                float sum = 0.0f;
                for (std::size_t c = 0; c < 5; ++c) sum += x.at(n, c, h, ww);
                EXPECT_EQ(y.at(n, 0, h, ww), sum);
            }
}

TEST(BinaryConvPacked, EqualsFloatPathExactly) {
    std::mt19937_64 rng(10);
    for (const ConvGeometry g : {ConvGeometry{3, 3, 1, 1}, ConvGeometry{3, 3, 2, 1}, ConvGeometry{5, 5, 1, 0},
                                 ConvGeometry{1, 1, 2, 0}}) {
        const Tensor x = testkit::sign_tensor({2, 9, 8, 8}, rng);
        const Tensor w = testkit::sign_tensor({7, 9 * g.kh * g.kw}, rng);
        const Tensor ref = conv2d(x, w, g, 1.0f);  // padding is +1 on the binary path
        const BitTensor packed = pack(w, PadRole::Weight);
        const Tensor ex = binary_conv_packed(x, packed, g, OffsetMode::Explicit);
        const Tensor le = binary_conv_packed(x, packed, g, OffsetMode::Learned);
        ASSERT_EQ(max_abs_diff(ex, ref), 0.0f);
        const float k = static_cast<float>(w.cols());
        for (std::size_t i = 0; i < ex.size(); ++i) ASSERT_EQ(2.0f * le[i] - k, ex[i]);
    }
}

TEST(BinaryConvPacked, RejectsNonBinaryInput) {
    Tensor x({1, 1, 3, 3}, 1.0f);
    x[4] = 0.25f;
    const BitTensor w = pack(Tensor({1, 9}, 1.0f), PadRole::Weight);
    EXPECT_EQ(code_of([&] { binary_conv_packed(x, w, {3, 3, 1, 0}, OffsetMode::Explicit); }),
              ErrorCode::NonBinaryValue);
}
