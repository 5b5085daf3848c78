#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace bitgrad {

/// Result of the xnor/popcount equivalence suite for one reduction length.
struct XnorCheck {
    std::size_t k = 0;
    std::size_t trials = 0;
    /// Explicit output != float dot product of the unpacked ±1 operands.
    std::size_t explicit_mismatches = 0;
    /// 2 * Learned - k != Explicit.
    std::size_t learned_mismatches = 0;
};

struct XnorReport {
    std::vector<XnorCheck> rows;
    double seconds = 0.0;

    std::size_t mismatches() const noexcept;
};

/// 1, 7, 63, 64, 65, 100, 1152, 4096: word boundaries, odd tails and the
/// reduction lengths of real layers.
std::vector<std::size_t> default_check_lengths();

/// Draws `trials` random ±1 operand pairs per length and compares the packed
/// kernel against the float dot product, with zero tolerance.
XnorReport check_xnor_equivalence(std::span<const std::size_t> lengths, std::size_t trials, std::uint64_t seed);

}  // namespace bitgrad
