#include <Eigen/Core>

#include "bitgrad/kernels.hpp"

namespace bitgrad {

namespace {

template <class T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using ConstView = Eigen::Map<const RowMajor<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

template <class T>
using View = Eigen::Map<RowMajor<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

template <class T, class A, class B>
void multiply(const A& a, const B& b, T alpha, T beta, View<T>& c) {
    if (beta == T(0)) {
        c.noalias() = alpha * (a * b);
    } else {
        if (beta != T(1)) c *= beta;
        c.noalias() += alpha * (a * b);
    }
}

}  // namespace

template <class T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
    using Index = Eigen::Index;
    View<T> cv(c, static_cast<Index>(m), static_cast<Index>(n), Eigen::OuterStride<>(static_cast<Index>(ldc)));
    if (m == 0 || n == 0) return;
    if (k == 0 || alpha == T(0)) {
        if (beta == T(0)) cv.setZero();
        else if (beta != T(1)) cv *= beta;
        return;
    }
    const auto rows_a = static_cast<Index>(ta == Trans::No ? m : k);
    const auto cols_a = static_cast<Index>(ta == Trans::No ? k : m);
    const auto rows_b = static_cast<Index>(tb == Trans::No ? k : n);
    const auto cols_b = static_cast<Index>(tb == Trans::No ? n : k);
    ConstView<T> av(a, rows_a, cols_a, Eigen::OuterStride<>(static_cast<Index>(lda)));
    ConstView<T> bv(b, rows_b, cols_b, Eigen::OuterStride<>(static_cast<Index>(ldb)));
    if (ta == Trans::No && tb == Trans::No) multiply(av, bv, alpha, beta, cv);
    else if (ta == Trans::No) multiply(av, bv.transpose(), alpha, beta, cv);
    else if (tb == Trans::No) multiply(av.transpose(), bv, alpha, beta, cv);
    else multiply(av.transpose(), bv.transpose(), alpha, beta, cv);
}

template void gemm<float>(Trans, Trans, std::size_t, std::size_t, std::size_t, float, const float*, std::size_t,
                          const float*, std::size_t, float, float*, std::size_t);
template void gemm<double>(Trans, Trans, std::size_t, std::size_t, std::size_t, double, const double*, std::size_t,
                           const double*, std::size_t, double, double*, std::size_t);

}  // namespace bitgrad
