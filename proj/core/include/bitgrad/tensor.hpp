#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace bitgrad {

/// Feature-map extents. Matrices use (rows, cols, 1, 1).
struct Shape {
    std::size_t n = 1;
    std::size_t c = 1;
    std::size_t h = 1;
    std::size_t w = 1;

    std::size_t size() const noexcept { return n * c * h * w; }
    std::size_t per_sample() const noexcept { return c * h * w; }
    std::size_t plane() const noexcept { return h * w; }

    bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

/// Dense row-major float tensor of rank 1..4 (W fastest).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims, float fill = 0.0f);
    // Keeps Tensor({rows, cols}) from also matching the Shape aggregate.
    explicit Tensor(std::initializer_list<std::size_t> dims, float fill = 0.0f)
        : Tensor(std::vector<std::size_t>(dims), fill) {}
    Tensor(std::vector<std::size_t> dims, std::vector<float> data);
    explicit Tensor(const Shape& s, float fill = 0.0f);

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<float> data);
    static Tensor vector(std::vector<float> data);

    const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    std::size_t rank() const noexcept { return dims_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    /// Rank-4 view of the extents, padding missing trailing axes with 1.
    Shape shape() const;

    /// Leading extent and product of the rest; the matrix view used by GEMM.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }
    std::vector<float>& storage() noexcept { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }
    float& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
    float at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

    Tensor reshaped(std::vector<std::size_t> dims) const;
    /// Rows [begin, end) along axis 0.
    Tensor slice(std::size_t begin, std::size_t end) const;

    void fill(float v);

    bool operator==(const Tensor&) const = default;

private:
    std::vector<std::size_t> dims_;
    std::vector<float> data_;
};

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);

float mean(const Tensor& t);
float abs_mean(const Tensor& t);
/// Reduces over `axis`; the reduced axis keeps extent 1.
Tensor mean(const Tensor& t, std::size_t axis);
Tensor abs_mean(const Tensor& t, std::size_t axis);

float max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace bitgrad
