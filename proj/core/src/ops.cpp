#include "bitgrad/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "bitgrad/error.hpp"

namespace bitgrad::ops {

namespace {

// Images per lowered GEMM, bounding the column buffer to ~4M elements.
std::size_t conv_chunk(std::size_t images, std::size_t positions, std::size_t k) {
    constexpr std::size_t kBudget = std::size_t{1} << 22;
    const std::size_t per = std::max<std::size_t>(1, positions * k);
    return std::clamp<std::size_t>(kBudget / per, 1, std::max<std::size_t>(images, 1));
}

}  // namespace

// Convolutions lower a chunk of images at once: the column matrix stacks
// (image, position) rows, so one GEMM covers the whole chunk.
template <class T>
void conv_forward(std::span<const T> x, const Shape& in, std::span<const T> w, std::span<const T> bias,
                  std::size_t filters, const ConvGeometry& g, T pad_value, std::span<T> y) {
    const Shape out = conv_out_shape(in, filters, g);
    const std::size_t positions = out.h * out.w;
    const std::size_t k = in.c * g.kh * g.kw;
    if (w.size() != filters * k || y.size() != out.size() || x.size() != in.size()) {
        fail(ErrorCode::ShapeMismatch, "conv_forward operand sizes for input " + to_string(in));
    }
    const std::size_t chunk = conv_chunk(in.n, positions, k);
    std::vector<T> col(chunk * positions * k);
    std::vector<T> tmp(filters * chunk * positions);
    for (std::size_t n0 = 0; n0 < in.n; n0 += chunk) {
        const std::size_t b = std::min(chunk, in.n - n0);
        const std::size_t cols = b * positions;
        for (std::size_t i = 0; i < b; ++i) {
            im2col(x.data() + (n0 + i) * in.per_sample(), in, g, pad_value, col.data() + i * positions * k);
        }
        gemm<T>(Trans::No, Trans::Yes, filters, cols, k, T(1), w.data(), k, col.data(), k, T(0), tmp.data(), cols);
        for (std::size_t i = 0; i < b; ++i) {
            T* yn = y.data() + (n0 + i) * out.per_sample();
            for (std::size_t f = 0; f < filters; ++f) {
                const T* src = tmp.data() + f * cols + i * positions;
                const T add = bias.empty() ? T(0) : bias[f];
                for (std::size_t p = 0; p < positions; ++p) yn[f * positions + p] = src[p] + add;
            }
        }
    }
}

template <class T>
void conv_backward(std::span<const T> x, const Shape& in, std::span<const T> w, std::size_t filters,
                   const ConvGeometry& g, T pad_value, std::span<const T> dy, std::span<T> dx, std::span<T> dw,
                   std::span<T> db) {
    const Shape out = conv_out_shape(in, filters, g);
    const std::size_t positions = out.h * out.w;
    const std::size_t k = in.c * g.kh * g.kw;
    const std::size_t chunk = conv_chunk(in.n, positions, k);
    std::vector<T> col(chunk * positions * k);
    std::vector<T> dyc(filters * chunk * positions);
    for (std::size_t n0 = 0; n0 < in.n; n0 += chunk) {
        const std::size_t b = std::min(chunk, in.n - n0);
        const std::size_t cols = b * positions;
        for (std::size_t i = 0; i < b; ++i) {
            const T* dyn = dy.data() + (n0 + i) * out.per_sample();
            for (std::size_t f = 0; f < filters; ++f) {
                std::copy_n(dyn + f * positions, positions, dyc.data() + f * cols + i * positions);
            }
        }
        if (!db.empty()) {
            for (std::size_t f = 0; f < filters; ++f) {
                T acc = 0;
                for (std::size_t p = 0; p < cols; ++p) acc += dyc[f * cols + p];
                db[f] += acc;
            }
        }
        if (!dw.empty()) {
            for (std::size_t i = 0; i < b; ++i) {
                im2col(x.data() + (n0 + i) * in.per_sample(), in, g, pad_value, col.data() + i * positions * k);
            }
            gemm<T>(Trans::No, Trans::No, filters, k, cols, T(1), dyc.data(), cols, col.data(), k, T(1), dw.data(), k);
        }
        if (!dx.empty()) {
            gemm<T>(Trans::Yes, Trans::No, cols, k, filters, T(1), dyc.data(), cols, w.data(), k, T(0), col.data(), k);
            for (std::size_t i = 0; i < b; ++i) {
                col2im(col.data() + i * positions * k, in, g, dx.data() + (n0 + i) * in.per_sample());
            }
        }
    }
}

template <class T>
void dense_forward(std::span<const T> x, std::size_t n, std::size_t in, std::span<const T> w,
                   std::span<const T> bias, std::size_t out, std::span<T> y) {
    if (x.size() != n * in || w.size() != out * in || y.size() != n * out) {
        fail(ErrorCode::ShapeMismatch, "dense_forward operand sizes");
    }
    gemm<T>(Trans::No, Trans::Yes, n, out, in, T(1), x.data(), in, w.data(), in, T(0), y.data(), out);
    if (!bias.empty()) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t o = 0; o < out; ++o) y[i * out + o] += bias[o];
        }
    }
}

template <class T>
void dense_backward(std::span<const T> x, std::size_t n, std::size_t in, std::span<const T> w, std::size_t out,
                    std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> db) {
    if (!dw.empty()) gemm<T>(Trans::Yes, Trans::No, out, in, n, T(1), dy.data(), out, x.data(), in, T(1), dw.data(), in);
    if (!dx.empty()) gemm<T>(Trans::No, Trans::No, n, in, out, T(1), dy.data(), out, w.data(), in, T(1), dx.data(), in);
    if (!db.empty()) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t o = 0; o < out; ++o) db[o] += dy[i * out + o];
        }
    }
}

template <class T>
void batchnorm_train_forward(std::span<const T> x, const Shape& s, std::span<const T> gamma,
                             std::span<const T> beta, T eps, std::span<T> y, std::span<T> mean,
                             std::span<T> var, std::span<T> invstd) {
    const std::size_t plane = s.plane();
    const double count = static_cast<double>(s.n * plane);
    for (std::size_t c = 0; c < s.c; ++c) {
        double sum = 0.0;
        for (std::size_t n = 0; n < s.n; ++n) {
            const T* p = x.data() + (n * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) sum += p[i];
        }
        const double mu = sum / count;
        double sq = 0.0;
        for (std::size_t n = 0; n < s.n; ++n) {
            const T* p = x.data() + (n * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double d = p[i] - mu;
                sq += d * d;
            }
        }
        const double v = sq / count;
        const T is = static_cast<T>(1.0 / std::sqrt(v + static_cast<double>(eps)));
        mean[c] = static_cast<T>(mu);
        var[c] = static_cast<T>(v);
        invstd[c] = is;
        const T m = static_cast<T>(mu);
        for (std::size_t n = 0; n < s.n; ++n) {
            const T* p = x.data() + (n * s.c + c) * plane;
            T* q = y.data() + (n * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) q[i] = (p[i] - m) * is * gamma[c] + beta[c];
        }
    }
}

template <class T>
void batchnorm_backward(std::span<const T> x, const Shape& s, std::span<const T> gamma, std::span<const T> mean,
                        std::span<const T> invstd, std::span<const T> dy, std::span<T> dx, std::span<T> dgamma,
                        std::span<T> dbeta) {
    const std::size_t plane = s.plane();
    const T count = static_cast<T>(s.n * plane);
    for (std::size_t c = 0; c < s.c; ++c) {
        T sum_dy = 0, sum_dy_xhat = 0;
        for (std::size_t n = 0; n < s.n; ++n) {
            const T* p = x.data() + (n * s.c + c) * plane;
            const T* d = dy.data() + (n * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                sum_dy += d[i];
                sum_dy_xhat += d[i] * (p[i] - mean[c]) * invstd[c];
            }
        }
        if (!dgamma.empty()) dgamma[c] += sum_dy_xhat;
        if (!dbeta.empty()) dbeta[c] += sum_dy;
        if (dx.empty()) continue;
        const T k = gamma[c] * invstd[c] / count;
        for (std::size_t n = 0; n < s.n; ++n) {
            const T* p = x.data() + (n * s.c + c) * plane;
            const T* d = dy.data() + (n * s.c + c) * plane;
            T* q = dx.data() + (n * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const T xhat = (p[i] - mean[c]) * invstd[c];
                q[i] += k * (count * d[i] - sum_dy - xhat * sum_dy_xhat);
            }
        }
    }
}

template <class T>
void batchnorm_fold(std::span<const T> gamma, std::span<const T> beta, std::span<const T> running_mean,
                    std::span<const T> running_var, T eps, std::span<T> scale, std::span<T> shift) {
    for (std::size_t c = 0; c < gamma.size(); ++c) {
        scale[c] = gamma[c] / std::sqrt(running_var[c] + eps);
        shift[c] = beta[c] - running_mean[c] * scale[c];
    }
}

template <class T>
void affine_channels(std::span<const T> x, const Shape& s, std::span<const T> scale, std::span<const T> shift,
                     std::span<T> y) {
    const std::size_t plane = s.plane();
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* p = x.data() + (n * s.c + c) * plane;
            T* q = y.data() + (n * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) q[i] = p[i] * scale[c] + shift[c];
        }
    }
}

template <class T>
void max_pool_forward(std::span<const T> x, const Shape& in, const ConvGeometry& g, std::span<T> y,
                      std::span<std::uint32_t> argmax) {
    const Shape out = conv_out_shape(in, in.c, g);
    // Clipped tap ranges per output row / column; padding never wins.
    auto clip = [](std::size_t o, std::size_t stride, std::size_t pad, std::size_t taps, std::size_t extent) {
        const auto start = static_cast<std::ptrdiff_t>(o * stride) - static_cast<std::ptrdiff_t>(pad);
        const auto lo = std::max<std::ptrdiff_t>(start, 0);
        const auto hi = std::min<std::ptrdiff_t>(start + static_cast<std::ptrdiff_t>(taps),
                                                 static_cast<std::ptrdiff_t>(extent));
        return std::pair<std::size_t, std::size_t>{static_cast<std::size_t>(lo),
                                                   static_cast<std::size_t>(std::max(lo, hi))};
    };
    for (std::size_t nc = 0; nc < in.n * in.c; ++nc) {
        const std::size_t base = nc * in.plane();
        const T* p = x.data() + base;
        for (std::size_t oy = 0; oy < out.h; ++oy) {
            const auto [y0, y1] = clip(oy, g.stride, g.pad, g.kh, in.h);
            for (std::size_t ox = 0; ox < out.w; ++ox) {
                const auto [x0, x1] = clip(ox, g.stride, g.pad, g.kw, in.w);
                T best = -std::numeric_limits<T>::infinity();
                std::size_t best_idx = y0 * in.w + x0;
                for (std::size_t iy = y0; iy < y1; ++iy) {
                    for (std::size_t ix = x0; ix < x1; ++ix) {
                        const std::size_t idx = iy * in.w + ix;
                        if (p[idx] > best) {
                            best = p[idx];
                            best_idx = idx;
                        }
                    }
                }
                const std::size_t o = (nc * out.h + oy) * out.w + ox;
                y[o] = best;
                if (!argmax.empty()) argmax[o] = static_cast<std::uint32_t>(base + best_idx);
            }
        }
    }
}

template <class T>
void max_pool_backward(std::span<const T> dy, std::span<const std::uint32_t> argmax, std::span<T> dx) {
    for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
}

template <class T>
void avg_pool_forward(std::span<const T> x, const Shape& in, const ConvGeometry& g, std::span<T> y) {
    const Shape out = conv_out_shape(in, in.c, g);
    const T inv = T(1) / static_cast<T>(g.kh * g.kw);
    for (std::size_t nc = 0; nc < in.n * in.c; ++nc) {
        const T* p = x.data() + nc * in.plane();
        for (std::size_t oy = 0; oy < out.h; ++oy) {
            for (std::size_t ox = 0; ox < out.w; ++ox) {
                T acc = 0;
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
                        acc += p[static_cast<std::size_t>(iy) * in.w + static_cast<std::size_t>(ix)];
                    }
                }
                y[nc * out.plane() + oy * out.w + ox] = acc * inv;
            }
        }
    }
}

template <class T>
void avg_pool_backward(std::span<const T> dy, const Shape& in, const ConvGeometry& g, std::span<T> dx) {
    const Shape out = conv_out_shape(in, in.c, g);
    const T inv = T(1) / static_cast<T>(g.kh * g.kw);
    for (std::size_t nc = 0; nc < in.n * in.c; ++nc) {
        T* q = dx.data() + nc * in.plane();
        for (std::size_t oy = 0; oy < out.h; ++oy) {
            for (std::size_t ox = 0; ox < out.w; ++ox) {
                const T d = dy[nc * out.plane() + oy * out.w + ox] * inv;
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
                        q[static_cast<std::size_t>(iy) * in.w + static_cast<std::size_t>(ix)] += d;
                    }
                }
            }
        }
    }
}

template <class T>
void global_avg_pool_forward(std::span<const T> x, const Shape& in, std::span<T> y) {
    const T inv = T(1) / static_cast<T>(in.plane());
    for (std::size_t nc = 0; nc < in.n * in.c; ++nc) {
        const T* p = x.data() + nc * in.plane();
        T acc = 0;
        for (std::size_t i = 0; i < in.plane(); ++i) acc += p[i];
        y[nc] = acc * inv;
    }
}

template <class T>
void global_avg_pool_backward(std::span<const T> dy, const Shape& in, std::span<T> dx) {
    const T inv = T(1) / static_cast<T>(in.plane());
    for (std::size_t nc = 0; nc < in.n * in.c; ++nc) {
        T* q = dx.data() + nc * in.plane();
        for (std::size_t i = 0; i < in.plane(); ++i) q[i] += dy[nc] * inv;
    }
}

template <class T>
double softmax_xent_forward(std::span<const T> logits, std::size_t n, std::size_t classes,
                            std::span<const int> labels, std::span<T> probs) {
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const T* z = logits.data() + i * classes;
        T* p = probs.data() + i * classes;
        const T zmax = *std::max_element(z, z + classes);
        double denom = 0.0;
        for (std::size_t c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(z[c] - zmax));
        for (std::size_t c = 0; c < classes; ++c) {
            p[c] = static_cast<T>(std::exp(static_cast<double>(z[c] - zmax)) / denom);
        }
        const auto label = static_cast<std::size_t>(labels[i]);
        if (label >= classes) fail(ErrorCode::ShapeMismatch, "label out of range");
        loss += std::log(denom) - static_cast<double>(z[label] - zmax);
    }
    return loss / static_cast<double>(n);
}

template <class T>
void softmax_xent_backward(std::span<const T> probs, std::size_t n, std::size_t classes,
                           std::span<const int> labels, std::span<T> dlogits) {
    const T inv = T(1) / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < classes; ++c) {
            const T target = static_cast<std::size_t>(labels[i]) == c ? T(1) : T(0);
            dlogits[i * classes + c] += (probs[i * classes + c] - target) * inv;
        }
    }
}

#define BITGRAD_INSTANTIATE_OPS(T)                                                                                   \
    template void conv_forward<T>(std::span<const T>, const Shape&, std::span<const T>, std::span<const T>,          \
                                  std::size_t, const ConvGeometry&, T, std::span<T>);                                \
    template void conv_backward<T>(std::span<const T>, const Shape&, std::span<const T>, std::size_t,                \
                                   const ConvGeometry&, T, std::span<const T>, std::span<T>, std::span<T>,           \
                                   std::span<T>);                                                                    \
    template void dense_forward<T>(std::span<const T>, std::size_t, std::size_t, std::span<const T>,                 \
                                   std::span<const T>, std::size_t, std::span<T>);                                   \
    template void dense_backward<T>(std::span<const T>, std::size_t, std::size_t, std::span<const T>, std::size_t,   \
                                    std::span<const T>, std::span<T>, std::span<T>, std::span<T>);                   \
    template void batchnorm_train_forward<T>(std::span<const T>, const Shape&, std::span<const T>,                   \
                                             std::span<const T>, T, std::span<T>, std::span<T>, std::span<T>,        \
                                             std::span<T>);                                                          \
    template void batchnorm_backward<T>(std::span<const T>, const Shape&, std::span<const T>, std::span<const T>,    \
                                        std::span<const T>, std::span<const T>, std::span<T>, std::span<T>,          \
                                        std::span<T>);                                                               \
    template void batchnorm_fold<T>(std::span<const T>, std::span<const T>, std::span<const T>, std::span<const T>,  \
                                    T, std::span<T>, std::span<T>);                                                  \
    template void affine_channels<T>(std::span<const T>, const Shape&, std::span<const T>, std::span<const T>,       \
                                     std::span<T>);                                                                  \
    template void max_pool_forward<T>(std::span<const T>, const Shape&, const ConvGeometry&, std::span<T>,           \
                                      std::span<std::uint32_t>);                                                     \
    template void max_pool_backward<T>(std::span<const T>, std::span<const std::uint32_t>, std::span<T>);            \
    template void avg_pool_forward<T>(std::span<const T>, const Shape&, const ConvGeometry&, std::span<T>);          \
    template void avg_pool_backward<T>(std::span<const T>, const Shape&, const ConvGeometry&, std::span<T>);         \
    template void global_avg_pool_forward<T>(std::span<const T>, const Shape&, std::span<T>);                        \
    template void global_avg_pool_backward<T>(std::span<const T>, const Shape&, std::span<T>);                       \
    template double softmax_xent_forward<T>(std::span<const T>, std::size_t, std::size_t, std::span<const int>,      \
                                            std::span<T>);                                                           \
    template void softmax_xent_backward<T>(std::span<const T>, std::size_t, std::size_t, std::span<const int>,       \
                                           std::span<T>);

BITGRAD_INSTANTIATE_OPS(float)
BITGRAD_INSTANTIATE_OPS(double)

#undef BITGRAD_INSTANTIATE_OPS

}  // namespace bitgrad::ops
