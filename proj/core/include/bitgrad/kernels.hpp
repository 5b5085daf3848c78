#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "bitgrad/bit_tensor.hpp"
#include "bitgrad/tensor.hpp"

namespace bitgrad {

/// Output is m x n; k is the reduction length (the number of weights per
/// output in the xnor formulation).
struct GemmProblem {
    std::size_t m = 1;
    std::size_t n = 1;
    std::size_t k = 1;
};

/// Explicit: 2 * popcount(xnor) - k, identical to the ±1 dot product.
/// Learned: popcount(xnor) alone, i.e. (dot + k) / 2; the affine correction is
/// carried by whatever parameters follow the layer.
enum class OffsetMode : std::uint8_t { Explicit = 0, Learned = 1 };

enum class Trans : std::uint8_t { No, Yes };

/// C = alpha * op(A) * op(B) + beta * C, row-major with leading dimensions.
/// op(A) is m x k, op(B) is k x n.
template <class T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

Tensor float_gemm(const Tensor& a, const Tensor& b);

/// a is m x k (input role), b is n x k (one output filter per row).
Tensor xnor_gemm(const BitTensor& a, const BitTensor& b, OffsetMode mode, std::size_t k_logical);
void xnor_gemm(const BitTensor& a, const BitTensor& b, OffsetMode mode, std::size_t k_logical,
               std::span<float> out);

struct ConvGeometry {
    std::size_t kh = 3;
    std::size_t kw = 3;
    std::size_t stride = 1;
    std::size_t pad = 0;

    bool operator==(const ConvGeometry&) const = default;
};

/// Output spatial extent; throws InvalidGeometry if the window does not fit.
std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);
Shape conv_out_shape(const Shape& in, std::size_t filters, const ConvGeometry& g);

/// Lowers one C x H x W image to (oh*ow) x (C*kh*kw), channel-major per row.
template <class T>
void im2col(const T* image, const Shape& in, const ConvGeometry& g, T pad_value, T* col);
/// Adds the columns back onto a C x H x W gradient image (padding dropped).
template <class T>
void col2im(const T* col, const Shape& in, const ConvGeometry& g, T* image);

/// Batch lowering: (N*oh*ow) x (C*kh*kw).
Tensor im2col(const Tensor& input, const ConvGeometry& g, float pad_value = 0.0f);

/// Real convolution through im2col + GEMM. weights: F x (C*kh*kw) or F,C,kh,kw.
Tensor conv2d(const Tensor& input, const Tensor& weights, const ConvGeometry& g, float pad_value = 0.0f);

/// Packs the receptive field of every output position of one image, taking
/// bit = (x >= 0) and 1 for spatial padding (padding maps to +1).
BitTensor pack_patches(std::span<const float> image, const Shape& in, const ConvGeometry& g);

/// Deployment convolution on the sign of `input`; writes N,F,oh,ow.
void binary_conv_signs(const Tensor& input, const BitTensor& weights, const ConvGeometry& g, OffsetMode mode,
                       std::span<float> out);

/// Binary convolution for an explicit ±1 input (NonBinaryValue otherwise).
/// Explicit mode matches conv2d(input, unpack(weights), g, +1) exactly.
Tensor binary_conv_packed(const Tensor& input, const BitTensor& weights, const ConvGeometry& g,
                          OffsetMode mode);

}  // namespace bitgrad
