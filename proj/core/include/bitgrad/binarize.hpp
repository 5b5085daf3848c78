#pragma once

#include <cstdint>

#include "bitgrad/kernels.hpp"
#include "bitgrad/tensor.hpp"

namespace bitgrad {

enum class BackwardRule : std::uint8_t { SteSign = 0, ApproxSign = 1 };

struct BinarizeConfig {
    BackwardRule backward = BackwardRule::SteSign;
    float clip_threshold = 1.0f;

    void validate() const;
    bool operator==(const BinarizeConfig&) const = default;
};

/// WeightPerChannel: mean |w| per filter. WeightScalar: one mean |w| for all
/// filters. InputK: mean |x| over each receptive field.
enum class ScalingMode : std::uint8_t { None = 0, WeightPerChannel = 1, WeightScalar = 2, InputK = 3 };

/// +1 for x >= 0 (including -0.0), -1 otherwise.
template <class T>
constexpr T sign_value(T x) noexcept {
    return x >= T(0) ? T(1) : T(-1);
}

/// Multiplier applied to the incoming gradient by the backward rule.
template <class T>
constexpr T ste_factor(T r, const BinarizeConfig& cfg) noexcept {
    const T clip = static_cast<T>(cfg.clip_threshold);
    if (!(r <= clip && r >= -clip)) return T(0);
    if (cfg.backward == BackwardRule::SteSign) return T(1);
    return r >= T(0) ? T(2) - T(2) * r : T(2) + T(2) * r;
}

Tensor sign_forward(const Tensor& r);
Tensor ste_backward(const Tensor& r, const Tensor& grad_out, const BinarizeConfig& cfg);

/// w is filters x k. Returns `filters` factors, or a single one for WeightScalar.
Tensor weight_scale(const Tensor& w, ScalingMode mode);

/// x is N,C,H,W; returns N,1,oh,ow with the receptive-field mean of |x|
/// (zero padding counts toward the window).
Tensor input_scale_K(const Tensor& x, const ConvGeometry& g);

/// Multiplies conv output (N,F,oh,ow) by per-filter (or scalar) factors and/or
/// a spatial N,1,oh,ow map. Pass an empty tensor to skip either.
Tensor scaled_binary_output(const Tensor& conv_out, const Tensor& channel_scale, const Tensor& spatial_scale);

enum class Spread : std::uint8_t { AbsMean, StdDev };

/// Per-channel standardization over N,H,W: subtract the channel mean and
/// divide by the channel spread of the centered values.
Tensor standardize_channels(const Tensor& y, Spread spread);

/// Whole-tensor normalization: subtract the mean, divide by the mean absolute
/// centered value.
Tensor normalize_mean_abs(const Tensor& y);

}  // namespace bitgrad
