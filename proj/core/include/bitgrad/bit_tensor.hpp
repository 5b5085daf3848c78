#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bitgrad/tensor.hpp"

namespace bitgrad {

/// Which side of an xnor product a packed operand sits on. Input rows pad
/// with 0 and weight rows pad with 1, so xnor over the padding is always 0
/// and popcount needs no tail mask.
enum class PadRole : std::uint8_t { Input = 0, Weight = 1 };

inline constexpr std::size_t kWordBits = 64;

constexpr std::size_t words_for(std::size_t bits) noexcept {
    return (bits + kWordBits - 1) / kWordBits;
}

/// Bit-packed {0,1} matrix. Logical bit j of row i lives in word
/// i * words_per_row + j / 64 at bit position j % 64 (LSB first).
class BitTensor {
public:
    BitTensor() = default;
    BitTensor(std::size_t rows, std::size_t cols, PadRole role);
    BitTensor(std::size_t rows, std::size_t cols, PadRole role, std::vector<std::uint64_t> words);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t words_per_row() const noexcept { return words_per_row_; }
    PadRole role() const noexcept { return role_; }

    std::span<const std::uint64_t> words() const noexcept { return words_; }
    std::span<const std::uint64_t> row(std::size_t r) const noexcept {
        return {words_.data() + r * words_per_row_, words_per_row_};
    }
    std::span<std::uint64_t> row(std::size_t r) noexcept {
        return {words_.data() + r * words_per_row_, words_per_row_};
    }

    bool bit(std::size_t r, std::size_t c) const noexcept {
        return (words_[r * words_per_row_ + c / kWordBits] >> (c % kWordBits)) & 1u;
    }

    bool operator==(const BitTensor&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::size_t words_per_row_ = 0;
    PadRole role_ = PadRole::Input;
    std::vector<std::uint64_t> words_;
};

/// Packs a rows x cols view of ±1 values (rank-1 tensors are one row).
/// Throws NonBinaryValue for anything other than exactly -1 or +1.
BitTensor pack(const Tensor& signs, PadRole role = PadRole::Input);
BitTensor pack(std::span<const float> signs, std::size_t rows, std::size_t cols, PadRole role);

/// Packs sign(x) directly (bit = x >= 0); used where the operand is the
/// binarized view of a real signal rather than an explicit ±1 tensor.
BitTensor pack_signs_of(std::span<const float> values, std::size_t rows, std::size_t cols, PadRole role);

/// rows x cols tensor of ±1.
Tensor unpack(const BitTensor& b);

}  // namespace bitgrad
