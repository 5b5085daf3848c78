#include "bitgrad/kernels.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "bitgrad/error.hpp"

namespace bitgrad {

Tensor float_gemm(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        fail(ErrorCode::ShapeMismatch, "float_gemm needs m x k and k x n operands");
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    gemm<float>(Trans::No, Trans::No, m, n, k, 1.0f, a.data().data(), k, b.data().data(), n, 0.0f,
                out.data().data(), n);
    return out;
}

void xnor_gemm(const BitTensor& a, const BitTensor& b, OffsetMode mode, std::size_t k_logical,
               std::span<float> out) {
    if (a.cols() != k_logical || b.cols() != k_logical) {
        fail(ErrorCode::LengthMismatch, "operands have lengths " + std::to_string(a.cols()) + " and " +
                                            std::to_string(b.cols()) + ", expected " +
                                            std::to_string(k_logical));
    }
    if (out.size() != a.rows() * b.rows()) fail(ErrorCode::ShapeMismatch, "xnor_gemm output size");
    const std::size_t words = a.words_per_row();
    // Equal pad roles make every padding bit agree; remove them again.
    const int pad_bias = a.role() == b.role() ? static_cast<int>(words * kWordBits - k_logical) : 0;
    const int k = static_cast<int>(k_logical);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const std::uint64_t* ar = a.row(i).data();
        float* orow = out.data() + i * b.rows();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const std::uint64_t* br = b.row(j).data();
            int count = 0;
            for (std::size_t w = 0; w < words; ++w) count += std::popcount(~(ar[w] ^ br[w]));
            count -= pad_bias;
            orow[j] = static_cast<float>(mode == OffsetMode::Explicit ? 2 * count - k : count);
        }
    }
}

Tensor xnor_gemm(const BitTensor& a, const BitTensor& b, OffsetMode mode, std::size_t k_logical) {
    Tensor out({a.rows(), b.rows()});
    xnor_gemm(a, b, mode, k_logical, out.data());
    return out;
}

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (kernel == 0 || stride == 0 || in + 2 * pad < kernel) {
        fail(ErrorCode::InvalidGeometry, "window " + std::to_string(kernel) + " stride " + std::to_string(stride) +
                                             " pad " + std::to_string(pad) + " does not fit extent " +
                                             std::to_string(in));
    }
    return (in + 2 * pad - kernel) / stride + 1;
}

Shape conv_out_shape(const Shape& in, std::size_t filters, const ConvGeometry& g) {
    return {in.n, filters, conv_out_extent(in.h, g.kh, g.stride, g.pad), conv_out_extent(in.w, g.kw, g.stride, g.pad)};
}

namespace {

// Valid kx range [lo, hi) for output column ox: taps that land inside the row.
struct TapRange {
    std::size_t lo;
    std::size_t hi;
};

TapRange taps_inside(std::size_t ox, const ConvGeometry& g, std::size_t width) {
    const auto x0 = static_cast<std::ptrdiff_t>(ox * g.stride) - static_cast<std::ptrdiff_t>(g.pad);
    const auto lo = std::max<std::ptrdiff_t>(0, -x0);
    const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(g.kw), static_cast<std::ptrdiff_t>(width) - x0);
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(std::max(lo, hi))};
}

}  // namespace

template <class T>
void im2col(const T* image, const Shape& in, const ConvGeometry& g, T pad_value, T* col) {
    const std::size_t oh = conv_out_extent(in.h, g.kh, g.stride, g.pad);
    const std::size_t ow = conv_out_extent(in.w, g.kw, g.stride, g.pad);
    const std::size_t k = in.c * g.kh * g.kw;
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            T* row = col + (oy * ow + ox) * k;
            const TapRange r = taps_inside(ox, g, in.w);
            const std::size_t x0 = ox * g.stride + r.lo - g.pad;
            for (std::size_t c = 0; c < in.c; ++c) {
                const T* plane = image + c * in.h * in.w;
                for (std::size_t ky = 0; ky < g.kh; ++ky, row += g.kw) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) {
                        std::fill(row, row + g.kw, pad_value);
                        continue;
                    }
                    std::fill(row, row + r.lo, pad_value);
                    std::copy_n(plane + static_cast<std::size_t>(iy) * in.w + x0, r.hi - r.lo, row + r.lo);
                    std::fill(row + r.hi, row + g.kw, pad_value);
                }
            }
        }
    }
}

template void im2col<float>(const float*, const Shape&, const ConvGeometry&, float, float*);
template void im2col<double>(const double*, const Shape&, const ConvGeometry&, double, double*);

template <class T>
void col2im(const T* col, const Shape& in, const ConvGeometry& g, T* image) {
    const std::size_t oh = conv_out_extent(in.h, g.kh, g.stride, g.pad);
    const std::size_t ow = conv_out_extent(in.w, g.kw, g.stride, g.pad);
    const std::size_t k = in.c * g.kh * g.kw;
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            const T* row = col + (oy * ow + ox) * k;
            const TapRange r = taps_inside(ox, g, in.w);
            const std::size_t x0 = ox * g.stride + r.lo - g.pad;
            for (std::size_t c = 0; c < in.c; ++c) {
                T* plane = image + c * in.h * in.w;
                for (std::size_t ky = 0; ky < g.kh; ++ky, row += g.kw) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
                    T* dst = plane + static_cast<std::size_t>(iy) * in.w + x0;
                    for (std::size_t kx = r.lo; kx < r.hi; ++kx) dst[kx - r.lo] += row[kx];
                }
            }
        }
    }
}

template void col2im<float>(const float*, const Shape&, const ConvGeometry&, float*);
template void col2im<double>(const double*, const Shape&, const ConvGeometry&, double*);

Tensor im2col(const Tensor& input, const ConvGeometry& g, float pad_value) {
    const Shape in = input.shape();
    const Shape out = conv_out_shape(in, 1, g);
    const std::size_t positions = out.h * out.w;
    const std::size_t k = in.c * g.kh * g.kw;
    Tensor col({in.n * positions, k});
    for (std::size_t n = 0; n < in.n; ++n) {
        im2col(input.data().data() + n * in.per_sample(), in, g, pad_value, col.data().data() + n * positions * k);
    }
    return col;
}

Tensor conv2d(const Tensor& input, const Tensor& weights, const ConvGeometry& g, float pad_value) {
    const Shape in = input.shape();
    const std::size_t filters = weights.rows();
    const std::size_t k = in.c * g.kh * g.kw;
    if (weights.cols() != k) {
        fail(ErrorCode::ShapeMismatch, "conv weights need " + std::to_string(k) + " values per filter");
    }
    const Shape out_shape = conv_out_shape(in, filters, g);
    const std::size_t positions = out_shape.h * out_shape.w;
    Tensor out(out_shape);
    std::vector<float> col(positions * k);
    for (std::size_t n = 0; n < in.n; ++n) {
        im2col(input.data().data() + n * in.per_sample(), in, g, pad_value, col.data());
        gemm<float>(Trans::No, Trans::Yes, filters, positions, k, 1.0f, weights.data().data(), k, col.data(), k, 0.0f,
                    out.data().data() + n * out_shape.per_sample(), positions);
    }
    return out;
}

BitTensor pack_patches(std::span<const float> image, const Shape& in, const ConvGeometry& g) {
    const std::size_t oh = conv_out_extent(in.h, g.kh, g.stride, g.pad);
    const std::size_t ow = conv_out_extent(in.w, g.kw, g.stride, g.pad);
    const std::size_t k = in.c * g.kh * g.kw;
    BitTensor bits(oh * ow, k, PadRole::Input);

    // Sign bits of the image with its +1 border, so the gather needs no bounds checks.
    const std::size_t ph = in.h + 2 * g.pad;
    const std::size_t pw = in.w + 2 * g.pad;
    std::vector<std::uint8_t> padded(in.c * ph * pw, 1);
    for (std::size_t c = 0; c < in.c; ++c) {
        for (std::size_t y = 0; y < in.h; ++y) {
            const float* src = image.data() + (c * in.h + y) * in.w;
            std::uint8_t* dst = padded.data() + (c * ph + y + g.pad) * pw + g.pad;
            for (std::size_t x = 0; x < in.w; ++x) dst[x] = src[x] >= 0.0f ? 1 : 0;
        }
    }

    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            std::uint64_t* row = bits.row(oy * ow + ox).data();
            std::uint64_t word = 0;
            std::size_t fill = 0;
            for (std::size_t c = 0; c < in.c; ++c) {
                const std::uint8_t* plane = padded.data() + (c * ph + oy * g.stride) * pw + ox * g.stride;
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    const std::uint8_t* line = plane + ky * pw;
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        word |= static_cast<std::uint64_t>(line[kx]) << fill;
                        if (++fill == kWordBits) {
                            *row++ = word;
                            word = 0;
                            fill = 0;
                        }
                    }
                }
            }
            if (fill != 0) *row = word;
        }
    }
    return bits;
}

void binary_conv_signs(const Tensor& input, const BitTensor& weights, const ConvGeometry& g, OffsetMode mode,
                       std::span<float> out) {
    const Shape in = input.shape();
    const std::size_t k = in.c * g.kh * g.kw;
    if (weights.cols() != k) {
        fail(ErrorCode::LengthMismatch, "packed filters hold " + std::to_string(weights.cols()) + " bits, input needs " +
                                            std::to_string(k));
    }
    const Shape out_shape = conv_out_shape(in, weights.rows(), g);
    if (out.size() != out_shape.size()) fail(ErrorCode::ShapeMismatch, "binary conv output size");
    const std::size_t positions = out_shape.h * out_shape.w;
    const std::size_t filters = weights.rows();
    std::vector<float> tmp(positions * filters);
    for (std::size_t n = 0; n < in.n; ++n) {
        const BitTensor patches = pack_patches(input.data().subspan(n * in.per_sample(), in.per_sample()), in, g);
        xnor_gemm(patches, weights, mode, k, tmp);
        float* dst = out.data() + n * out_shape.per_sample();
        for (std::size_t p = 0; p < positions; ++p) {
            for (std::size_t f = 0; f < filters; ++f) dst[f * positions + p] = tmp[p * filters + f];
        }
    }
}

Tensor binary_conv_packed(const Tensor& input, const BitTensor& weights, const ConvGeometry& g, OffsetMode mode) {
    auto values = input.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] != 1.0f && values[i] != -1.0f) {
            fail(ErrorCode::NonBinaryValue, "binary conv input element " + std::to_string(i) + " is not +-1");
        }
    }
    Tensor out(conv_out_shape(input.shape(), weights.rows(), g));
    binary_conv_signs(input, weights, g, mode, out.data());
    return out;
}

}  // namespace bitgrad
