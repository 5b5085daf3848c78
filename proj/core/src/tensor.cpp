#include "bitgrad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "bitgrad/error.hpp"

namespace bitgrad {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::NonBinaryValue: return "NonBinaryValue";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::InvalidGeometry: return "InvalidGeometry";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::IncompatibleLayer: return "IncompatibleLayer";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::Truncated: return "Truncated";
        case ErrorCode::TruncatedFile: return "TruncatedFile";
        case ErrorCode::MissingFile: return "MissingFile";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

std::string to_string(const Shape& s) {
    return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
           std::to_string(s.w) + ")";
}

namespace {

std::size_t product(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

void check_dims(const std::vector<std::size_t>& dims) {
    if (dims.empty() || dims.size() > 4) {
        fail(ErrorCode::ShapeMismatch, "tensor rank must be 1..4, got " + std::to_string(dims.size()));
    }
    for (auto d : dims) {
        if (d == 0) fail(ErrorCode::ShapeMismatch, "tensor extents must be >= 1");
    }
}

std::string dims_string(const std::vector<std::size_t>& dims) {
    std::string s = "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(dims[i]);
    }
    return s + "]";
}

template <class Op>
Tensor zip(const Tensor& a, const Tensor& b, Op op, const char* name) {
    if (a.dims() != b.dims()) {
        fail(ErrorCode::ShapeMismatch,
             std::string(name) + " of " + dims_string(a.dims()) + " and " + dims_string(b.dims()));
    }
    Tensor out(a.dims());
    auto x = a.data();
    auto y = b.data();
    auto z = out.data();
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = op(x[i], y[i]);
    return out;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims, float fill) : dims_(std::move(dims)) {
    check_dims(dims_);
    data_.assign(product(dims_), fill);
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<float> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
    check_dims(dims_);
    if (product(dims_) != data_.size()) {
        fail(ErrorCode::ShapeMismatch, "extents " + dims_string(dims_) + " do not match " +
                                           std::to_string(data_.size()) + " values");
    }
}

Tensor::Tensor(const Shape& s, float fill) : Tensor(std::vector<std::size_t>{s.n, s.c, s.h, s.w}, fill) {}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<float> data) {
    return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::vector(std::vector<float> data) {
    const auto n = data.size();
    return Tensor({n}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= dims_.size()) fail(ErrorCode::ShapeMismatch, "axis out of range");
    return dims_[axis];
}

Shape Tensor::shape() const {
    Shape s;
    if (dims_.size() > 0) s.n = dims_[0];
    if (dims_.size() > 1) s.c = dims_[1];
    if (dims_.size() > 2) s.h = dims_[2];
    if (dims_.size() > 3) s.w = dims_[3];
    return s;
}

std::size_t Tensor::rows() const {
    if (dims_.size() == 1) return 1;
    return dims_.empty() ? 0 : dims_[0];
}

std::size_t Tensor::cols() const {
    if (dims_.size() == 1) return dims_[0];
    return rows() == 0 ? 0 : data_.size() / rows();
}

float& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    const Shape s = shape();
    return data_[((n * s.c + c) * s.h + h) * s.w + w];
}

float Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    const Shape s = shape();
    return data_[((n * s.c + c) * s.h + h) * s.w + w];
}

Tensor Tensor::reshaped(std::vector<std::size_t> dims) const {
    return Tensor(std::move(dims), data_);
}

Tensor Tensor::slice(std::size_t begin, std::size_t end) const {
    if (dims_.empty() || begin >= end || end > dims_[0]) {
        fail(ErrorCode::ShapeMismatch, "slice [" + std::to_string(begin) + "," + std::to_string(end) +
                                           ") of " + dims_string(dims_));
    }
    const std::size_t stride = data_.size() / dims_[0];
    auto dims = dims_;
    dims[0] = end - begin;
    return Tensor(std::move(dims), std::vector<float>(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                                      data_.begin() + static_cast<std::ptrdiff_t>(end * stride)));
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Tensor add(const Tensor& a, const Tensor& b) {
    return zip(a, b, std::plus<float>(), "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return zip(a, b, std::minus<float>(), "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return zip(a, b, std::multiplies<float>(), "mul");
}

Tensor scale(const Tensor& a, float s) {
    Tensor out = a;
    for (auto& v : out.data()) v *= s;
    return out;
}

float mean(const Tensor& t) {
    double acc = 0.0;
    for (float v : t.data()) acc += v;
    return static_cast<float>(acc / static_cast<double>(t.size()));
}

float abs_mean(const Tensor& t) {
    double acc = 0.0;
    for (float v : t.data()) acc += std::fabs(v);
    return static_cast<float>(acc / static_cast<double>(t.size()));
}

namespace {

template <class F>
Tensor reduce_axis(const Tensor& t, std::size_t axis, F f) {
    const auto& dims = t.dims();
    if (axis >= dims.size()) fail(ErrorCode::ShapeMismatch, "reduction axis out of range");
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= dims[i];
    for (std::size_t i = axis + 1; i < dims.size(); ++i) inner *= dims[i];
    const std::size_t len = dims[axis];
    auto out_dims = dims;
    out_dims[axis] = 1;
    Tensor out(out_dims);
    auto src = t.data();
    auto dst = out.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            double acc = 0.0;
            for (std::size_t k = 0; k < len; ++k) acc += f(src[(o * len + k) * inner + i]);
            dst[o * inner + i] = static_cast<float>(acc / static_cast<double>(len));
        }
    }
    return out;
}

}  // namespace

Tensor mean(const Tensor& t, std::size_t axis) {
    return reduce_axis(t, axis, [](float v) { return static_cast<double>(v); });
}

Tensor abs_mean(const Tensor& t, std::size_t axis) {
    return reduce_axis(t, axis, [](float v) { return std::fabs(static_cast<double>(v)); });
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) fail(ErrorCode::ShapeMismatch, "max_abs_diff size mismatch");
    float m = 0.0f;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace bitgrad
