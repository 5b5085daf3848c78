#pragma once

// Layer math shared by the training executor (float) and the double-precision
// shadow path the gradient checks run on. Backward functions accumulate into
// their gradient outputs; an empty span skips that gradient.

#include <cstddef>
#include <cstdint>
#include <span>

#include "bitgrad/kernels.hpp"
#include "bitgrad/tensor.hpp"

namespace bitgrad::ops {

template <class T>
void conv_forward(std::span<const T> x, const Shape& in, std::span<const T> w, std::span<const T> bias,
                  std::size_t filters, const ConvGeometry& g, T pad_value, std::span<T> y);

template <class T>
void conv_backward(std::span<const T> x, const Shape& in, std::span<const T> w, std::size_t filters,
                   const ConvGeometry& g, T pad_value, std::span<const T> dy, std::span<T> dx, std::span<T> dw,
                   std::span<T> db);

/// y (n x out) = x (n x in) * w^T + bias, w stored out x in.
template <class T>
void dense_forward(std::span<const T> x, std::size_t n, std::size_t in, std::span<const T> w,
                   std::span<const T> bias, std::size_t out, std::span<T> y);

template <class T>
void dense_backward(std::span<const T> x, std::size_t n, std::size_t in, std::span<const T> w, std::size_t out,
                    std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> db);

/// Normalizes with batch statistics; mean/invstd are per channel outputs.
template <class T>
void batchnorm_train_forward(std::span<const T> x, const Shape& s, std::span<const T> gamma,
                             std::span<const T> beta, T eps, std::span<T> y, std::span<T> mean,
                             std::span<T> var, std::span<T> invstd);

template <class T>
void batchnorm_backward(std::span<const T> x, const Shape& s, std::span<const T> gamma, std::span<const T> mean,
                        std::span<const T> invstd, std::span<const T> dy, std::span<T> dx, std::span<T> dgamma,
                        std::span<T> dbeta);

/// Folded inference normalization: scale = gamma / sqrt(var + eps),
/// shift = beta - mean * scale. Training eval and packed export share it.
template <class T>
void batchnorm_fold(std::span<const T> gamma, std::span<const T> beta, std::span<const T> running_mean,
                    std::span<const T> running_var, T eps, std::span<T> scale, std::span<T> shift);

template <class T>
void affine_channels(std::span<const T> x, const Shape& s, std::span<const T> scale, std::span<const T> shift,
                     std::span<T> y);

template <class T>
void max_pool_forward(std::span<const T> x, const Shape& in, const ConvGeometry& g, std::span<T> y,
                      std::span<std::uint32_t> argmax);

template <class T>
void max_pool_backward(std::span<const T> dy, std::span<const std::uint32_t> argmax, std::span<T> dx);

/// Divides by the full window size; padded taps count as zero.
template <class T>
void avg_pool_forward(std::span<const T> x, const Shape& in, const ConvGeometry& g, std::span<T> y);

template <class T>
void avg_pool_backward(std::span<const T> dy, const Shape& in, const ConvGeometry& g, std::span<T> dx);

template <class T>
void global_avg_pool_forward(std::span<const T> x, const Shape& in, std::span<T> y);

template <class T>
void global_avg_pool_backward(std::span<const T> dy, const Shape& in, std::span<T> dx);

/// Mean cross-entropy over the batch; probs receives the softmax.
template <class T>
double softmax_xent_forward(std::span<const T> logits, std::size_t n, std::size_t classes,
                            std::span<const int> labels, std::span<T> probs);

template <class T>
void softmax_xent_backward(std::span<const T> probs, std::size_t n, std::size_t classes,
                           std::span<const int> labels, std::span<T> dlogits);

}  // namespace bitgrad::ops
