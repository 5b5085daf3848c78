#include "bitgrad/binarize.hpp"

#include <cmath>
#include <string>

#include "bitgrad/error.hpp"

namespace bitgrad {

void BinarizeConfig::validate() const {
    if (!(clip_threshold > 0.0f)) {
        fail(ErrorCode::InvalidConfig, "clip threshold must be positive, got " + std::to_string(clip_threshold));
    }
}

Tensor sign_forward(const Tensor& r) {
    Tensor out(r.dims());
    auto src = r.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = sign_value(src[i]);
    return out;
}

Tensor ste_backward(const Tensor& r, const Tensor& grad_out, const BinarizeConfig& cfg) {
    if (r.dims() != grad_out.dims()) fail(ErrorCode::ShapeMismatch, "ste_backward operands differ in shape");
    Tensor out(r.dims());
    auto x = r.data();
    auto g = grad_out.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = g[i] * ste_factor(x[i], cfg);
    return out;
}

Tensor weight_scale(const Tensor& w, ScalingMode mode) {
    const std::size_t filters = w.rows();
    const std::size_t k = w.cols();
    auto v = w.data();
    if (mode == ScalingMode::WeightPerChannel) {
        Tensor out({filters});
        for (std::size_t f = 0; f < filters; ++f) {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) acc += std::fabs(v[f * k + i]);
            out[f] = static_cast<float>(acc / static_cast<double>(k));
        }
        return out;
    }
    if (mode == ScalingMode::WeightScalar) {
        double acc = 0.0;
        for (float x : v) acc += std::fabs(x);
        return Tensor({1}, std::vector<float>{static_cast<float>(acc / static_cast<double>(v.size()))});
    }
    fail(ErrorCode::InvalidConfig, "weight_scale needs a weight scaling mode");
}

Tensor input_scale_K(const Tensor& x, const ConvGeometry& g) {
    const Shape in = x.shape();
    const Shape out_shape = conv_out_shape(in, 1, g);
    // Channel-mean of |x|, then a uniform box filter over the window.
    Tensor a({in.n, 1, in.h, in.w});
    for (std::size_t n = 0; n < in.n; ++n) {
        for (std::size_t p = 0; p < in.plane(); ++p) {
            double acc = 0.0;
            for (std::size_t c = 0; c < in.c; ++c) acc += std::fabs(x.data()[(n * in.c + c) * in.plane() + p]);
            a.data()[n * in.plane() + p] = static_cast<float>(acc / static_cast<double>(in.c));
        }
    }
    const float w = 1.0f / static_cast<float>(g.kh * g.kw);
    Tensor box({1, g.kh * g.kw}, w);
    return conv2d(a, box, g, 0.0f).reshaped({out_shape.n, 1, out_shape.h, out_shape.w});
}

Tensor scaled_binary_output(const Tensor& conv_out, const Tensor& channel_scale, const Tensor& spatial_scale) {
    const Shape s = conv_out.shape();
    Tensor out = conv_out;
    auto y = out.data();
    if (!channel_scale.empty()) {
        if (channel_scale.size() != 1 && channel_scale.size() != s.c) {
            fail(ErrorCode::ShapeMismatch, "channel scale has " + std::to_string(channel_scale.size()) +
                                               " entries for " + std::to_string(s.c) + " channels");
        }
        for (std::size_t n = 0; n < s.n; ++n) {
            for (std::size_t c = 0; c < s.c; ++c) {
                const float a = channel_scale.size() == 1 ? channel_scale[0] : channel_scale[c];
                float* plane = y.data() + (n * s.c + c) * s.plane();
                for (std::size_t p = 0; p < s.plane(); ++p) plane[p] *= a;
            }
        }
    }
    if (!spatial_scale.empty()) {
        const Shape k = spatial_scale.shape();
        if (k.n != s.n || k.c != 1 || k.h != s.h || k.w != s.w) {
            fail(ErrorCode::ShapeMismatch, "spatial scale " + to_string(k) + " for output " + to_string(s));
        }
        for (std::size_t n = 0; n < s.n; ++n) {
            for (std::size_t c = 0; c < s.c; ++c) {
                float* plane = y.data() + (n * s.c + c) * s.plane();
                const float* kp = spatial_scale.data().data() + n * s.plane();
                for (std::size_t p = 0; p < s.plane(); ++p) plane[p] *= kp[p];
            }
        }
    }
    return out;
}

Tensor standardize_channels(const Tensor& y, Spread spread) {
    const Shape s = y.shape();
    Tensor out(y.dims());
    const double count = static_cast<double>(s.n * s.plane());
    for (std::size_t c = 0; c < s.c; ++c) {
        double sum = 0.0;
        for (std::size_t n = 0; n < s.n; ++n) {
            for (std::size_t p = 0; p < s.plane(); ++p) sum += y.data()[(n * s.c + c) * s.plane() + p];
        }
        const double mu = sum / count;
        double dev = 0.0;
        for (std::size_t n = 0; n < s.n; ++n) {
            for (std::size_t p = 0; p < s.plane(); ++p) {
                const double d = y.data()[(n * s.c + c) * s.plane() + p] - mu;
                dev += spread == Spread::AbsMean ? std::fabs(d) : d * d;
            }
        }
        double denom = spread == Spread::AbsMean ? dev / count : std::sqrt(dev / count);
        if (denom == 0.0) denom = 1.0;
        for (std::size_t n = 0; n < s.n; ++n) {
            for (std::size_t p = 0; p < s.plane(); ++p) {
                const std::size_t i = (n * s.c + c) * s.plane() + p;
                out.data()[i] = static_cast<float>((y.data()[i] - mu) / denom);
            }
        }
    }
    return out;
}

Tensor normalize_mean_abs(const Tensor& y) {
    double sum = 0.0;
    for (float v : y.data()) sum += v;
    const double mu = sum / static_cast<double>(y.size());
    double dev = 0.0;
    for (float v : y.data()) dev += std::fabs(v - mu);
    double denom = dev / static_cast<double>(y.size());
    if (denom == 0.0) denom = 1.0;
    Tensor out(y.dims());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = static_cast<float>((y[i] - mu) / denom);
    return out;
}

}  // namespace bitgrad
