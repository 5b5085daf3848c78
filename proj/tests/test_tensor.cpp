#include <gtest/gtest.h>

#include <bit>
#include <random>

#include "bitgrad/bit_tensor.hpp"
#include "bitgrad/error.hpp"
#include "bitgrad/tensor.hpp"
#include "support.hpp"

using namespace bitgrad;

namespace {

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

TEST(Tensor, RejectsZeroExtentAndBadRank) {
    EXPECT_EQ(code_of([] { Tensor({2, 0}); }), ErrorCode::ShapeMismatch);
    EXPECT_EQ(code_of([] { Tensor(std::vector<std::size_t>{1, 1, 1, 1, 1}); }), ErrorCode::ShapeMismatch);
    EXPECT_EQ(code_of([] { Tensor({2, 2}, std::vector<float>{1, 2, 3}); }), ErrorCode::ShapeMismatch);
}

TEST(Tensor, MeanAndAbsMean) {
    EXPECT_FLOAT_EQ(mean(Tensor::vector({1, 2, 3})), 2.0f);
    EXPECT_FLOAT_EQ(abs_mean(Tensor::vector({0.5f, -1.5f, 1.0f, -1.0f})), 1.0f);
}

TEST(Tensor, AxisReductionsKeepTheAxis) {
    const Tensor m = Tensor::matrix(2, 3, {1, -2, 3, -4, 5, -6});
    const Tensor rows = mean(m, 1);
    ASSERT_EQ(rows.dims(), (std::vector<std::size_t>{2, 1}));
    EXPECT_FLOAT_EQ(rows[0], 2.0f / 3.0f);
    EXPECT_FLOAT_EQ(rows[1], -5.0f / 3.0f);
    const Tensor cols = abs_mean(m, 0);
    ASSERT_EQ(cols.dims(), (std::vector<std::size_t>{1, 3}));
    EXPECT_FLOAT_EQ(cols[0], 2.5f);
    EXPECT_FLOAT_EQ(cols[1], 3.5f);
    EXPECT_FLOAT_EQ(cols[2], 4.5f);
}

TEST(Tensor, ElementwiseOps) {
    const Tensor a = Tensor::vector({1, 2, 3});
    const Tensor b = Tensor::vector({4, 5, 6});
    EXPECT_EQ(add(a, b), Tensor::vector({5, 7, 9}));
    EXPECT_EQ(sub(a, b), Tensor::vector({-3, -3, -3}));
    EXPECT_EQ(mul(a, b), Tensor::vector({4, 10, 18}));
    EXPECT_EQ(scale(a, 2.0f), Tensor::vector({2, 4, 6}));
    EXPECT_EQ(code_of([&] { add(a, Tensor::vector({1, 2})); }), ErrorCode::ShapeMismatch);
    EXPECT_EQ(code_of([&] { add(Tensor({2, 3}), Tensor({3, 2})); }), ErrorCode::ShapeMismatch);
}

TEST(Tensor, ReshapeAndSlice) {
    Tensor t({2, 3, 2, 2});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i);
    const Tensor r = t.reshaped({6, 4});
    EXPECT_EQ(r.rows(), 6u);
    EXPECT_EQ(r.cols(), 4u);
    EXPECT_EQ(r[13], 13.0f);
    EXPECT_EQ(code_of([&] { t.reshaped({5, 5}); }), ErrorCode::ShapeMismatch);
    const Tensor s = t.slice(1, 2);
    EXPECT_EQ(s.dims(), (std::vector<std::size_t>{1, 3, 2, 2}));
    EXPECT_EQ(s[0], 12.0f);
    EXPECT_EQ(s.at(0, 2, 1, 1), t.at(1, 2, 1, 1));
    EXPECT_EQ(code_of([&] { t.slice(1, 3); }), ErrorCode::ShapeMismatch);
}

TEST(Tensor, ShapeViewPadsTrailingAxes) {
    EXPECT_EQ(Tensor({5, 7}).shape(), (Shape{5, 7, 1, 1}));
    EXPECT_EQ(Tensor({2, 3, 4, 5}).shape().per_sample(), 60u);
}

TEST(BitTensor, PackMapsPlusOneToSetBitsLsbFirst) {
    const BitTensor b = pack(Tensor::vector({1, -1, 1, -1}));
    ASSERT_EQ(b.words_per_row(), 1u);
    EXPECT_EQ(b.words()[0] & 0xF, 0b0101u);
    EXPECT_TRUE(b.bit(0, 0));
    EXPECT_FALSE(b.bit(0, 1));
}

TEST(BitTensor, PaddingFollowsRole) {
    const Tensor ones = Tensor::vector({1, 1, 1});
    const BitTensor in = pack(ones, PadRole::Input);
    const BitTensor wt = pack(ones, PadRole::Weight);
    EXPECT_EQ(std::popcount(in.words()[0]), 3);
    EXPECT_EQ(std::popcount(wt.words()[0]), 64);
    // xnor over the padding region of an input/weight pair is zero.
    const std::uint64_t pad_mask = ~std::uint64_t{0} << 3;
    EXPECT_EQ(std::popcount(~(in.words()[0] ^ wt.words()[0]) & pad_mask), 0);
}

TEST(BitTensor, WordsPerRow) {
    std::mt19937_64 rng(1);
    EXPECT_EQ(pack(testkit::random_signs(100, rng), 1, 100, PadRole::Input).words_per_row(), 2u);
    EXPECT_EQ(pack(testkit::random_signs(64, rng), 1, 64, PadRole::Input).words_per_row(), 1u);
    EXPECT_EQ(pack(testkit::random_signs(65, rng), 1, 65, PadRole::Input).words_per_row(), 2u);
    const BitTensor b = pack(testkit::random_signs(3 * 130, rng), 3, 130, PadRole::Weight);
    EXPECT_EQ(b.words().size(), 3u * 3u);
}

TEST(BitTensor, RejectsNonBinaryValues) {
    EXPECT_EQ(code_of([] { pack(Tensor::vector({1, 0.5f})); }), ErrorCode::NonBinaryValue);
    EXPECT_EQ(code_of([] { pack(Tensor::vector({0})); }), ErrorCode::NonBinaryValue);
}

TEST(BitTensor, UnpackExamples) {
    EXPECT_EQ(unpack(pack(Tensor::vector({1, -1}))), Tensor::matrix(1, 2, {1, -1}));
    const Tensor all = unpack(pack(Tensor::vector(std::vector<float>(64, 1.0f))));
    for (float v : all.data()) EXPECT_EQ(v, 1.0f);
}

TEST(BitTensor, RoundTripExhaustiveShortLengths) {
    std::mt19937_64 rng(7);
    for (std::size_t len = 1; len <= 130; ++len) {
        for (auto role : {PadRole::Input, PadRole::Weight}) {
            const auto v = testkit::random_signs(len * 3, rng);
            const Tensor t = Tensor::matrix(3, len, v);
            ASSERT_EQ(unpack(pack(t, role)), t) << "length " << len;
        }
    }
    // Every pattern of the first 10 bits.
    for (unsigned pattern = 0; pattern < 1024; ++pattern) {
        std::vector<float> v(10);
        for (int i = 0; i < 10; ++i) v[i] = (pattern >> i) & 1 ? 1.0f : -1.0f;
        const Tensor t = Tensor::matrix(1, 10, v);
        const BitTensor b = pack(t);
        ASSERT_EQ(b.words()[0] & 0x3FF, pattern);
        ASSERT_EQ(unpack(b), t);
    }
}

TEST(BitTensor, RoundTripRandomLongRows) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::size_t> len(131, 5000);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t k = len(rng);
        const Tensor t = testkit::sign_tensor({2, k}, rng);
        ASSERT_EQ(unpack(pack(t, PadRole::Weight)), t);
    }
    const Tensor t = testkit::sign_tensor({7, 130}, rng);
    EXPECT_EQ(unpack(pack(t)), t);
}

TEST(BitTensor, SingleSetBitLandsAtWordAndPosition) {
    for (std::size_t k : {0u, 1u, 63u, 64u, 65u, 127u, 199u}) {
        std::vector<float> v(200, -1.0f);
        v[k] = 1.0f;
        const BitTensor b = pack(v, 1, 200, PadRole::Input);
        for (std::size_t w = 0; w < b.words_per_row(); ++w) {
            const std::uint64_t want = w == k / 64 ? std::uint64_t{1} << (k % 64) : 0;
            EXPECT_EQ(b.words()[w], want) << "k=" << k << " word " << w;
        }
    }
}

TEST(BitTensor, PackSignsOfTreatsZeroAsPlusOne) {
    const std::vector<float> v{0.0f, -0.0f, -0.1f, 2.0f};
    const BitTensor b = pack_signs_of(v, 1, 4, PadRole::Input);
    EXPECT_EQ(b.words()[0], 0b1011u);
}
