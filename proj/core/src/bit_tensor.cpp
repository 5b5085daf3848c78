#include "bitgrad/bit_tensor.hpp"

#include <algorithm>
#include <string>

#include "bitgrad/error.hpp"

namespace bitgrad {

namespace {

std::uint64_t pad_mask(std::size_t cols) {
    const std::size_t used = cols % kWordBits;
    return used == 0 ? 0 : ~((std::uint64_t{1} << used) - 1);
}

void set_padding(std::span<std::uint64_t> row, std::size_t cols, PadRole role) {
    if (role == PadRole::Weight && !row.empty()) row.back() |= pad_mask(cols);
}

template <class BitOf>
BitTensor pack_impl(std::size_t rows, std::size_t cols, PadRole role, BitOf bit_of) {
    BitTensor out(rows, cols, role);
    for (std::size_t r = 0; r < rows; ++r) {
        auto words = out.row(r);
        for (std::size_t wi = 0; wi < words.size(); ++wi) {
            const std::size_t base = wi * kWordBits;
            const std::size_t end = std::min(cols, base + kWordBits);
            std::uint64_t word = 0;
            for (std::size_t c = base; c < end; ++c) {
                word |= static_cast<std::uint64_t>(bit_of(r * cols + c)) << (c - base);
            }
            words[wi] = word;
        }
        set_padding(words, cols, role);
    }
    return out;
}

}  // namespace

BitTensor::BitTensor(std::size_t rows, std::size_t cols, PadRole role)
    : rows_(rows), cols_(cols), words_per_row_(words_for(cols)), role_(role),
      words_(rows * words_for(cols), 0) {
    for (std::size_t r = 0; r < rows_; ++r) set_padding(row(r), cols_, role_);
}

BitTensor::BitTensor(std::size_t rows, std::size_t cols, PadRole role, std::vector<std::uint64_t> words)
    : rows_(rows), cols_(cols), words_per_row_(words_for(cols)), role_(role), words_(std::move(words)) {
    if (words_.size() != rows_ * words_per_row_) {
        fail(ErrorCode::LengthMismatch, "bit tensor expects " + std::to_string(rows_ * words_per_row_) +
                                            " words, got " + std::to_string(words_.size()));
    }
    // Normalise padding so equality and xnor neutrality hold for loaded data.
    const std::uint64_t mask = pad_mask(cols_);
    for (std::size_t r = 0; r < rows_ && mask != 0; ++r) {
        auto& last = row(r).back();
        last = role_ == PadRole::Weight ? (last | mask) : (last & ~mask);
    }
}

BitTensor pack(std::span<const float> signs, std::size_t rows, std::size_t cols, PadRole role) {
    if (signs.size() != rows * cols) {
        fail(ErrorCode::ShapeMismatch, "pack expects " + std::to_string(rows * cols) + " values");
    }
    for (std::size_t i = 0; i < signs.size(); ++i) {
        if (signs[i] != 1.0f && signs[i] != -1.0f) {
            fail(ErrorCode::NonBinaryValue,
                 "element " + std::to_string(i) + " = " + std::to_string(signs[i]) + " is not +-1");
        }
    }
    return pack_impl(rows, cols, role, [&](std::size_t i) { return signs[i] == 1.0f; });
}

BitTensor pack(const Tensor& signs, PadRole role) {
    return pack(signs.data(), signs.rows(), signs.cols(), role);
}

BitTensor pack_signs_of(std::span<const float> values, std::size_t rows, std::size_t cols, PadRole role) {
    if (values.size() != rows * cols) {
        fail(ErrorCode::ShapeMismatch, "pack expects " + std::to_string(rows * cols) + " values");
    }
    return pack_impl(rows, cols, role, [&](std::size_t i) { return values[i] >= 0.0f; });
}

Tensor unpack(const BitTensor& b) {
    Tensor out({b.rows(), b.cols()});
    auto dst = out.data();
    for (std::size_t r = 0; r < b.rows(); ++r) {
        for (std::size_t c = 0; c < b.cols(); ++c) {
            dst[r * b.cols() + c] = b.bit(r, c) ? 1.0f : -1.0f;
        }
    }
    return out;
}

}  // namespace bitgrad
