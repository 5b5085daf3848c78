#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "bitgrad/data.hpp"
#include "bitgrad/tensor.hpp"

namespace bitgrad::testkit {

inline std::vector<float> random_signs(std::size_t n, std::mt19937_64& rng) {
    std::bernoulli_distribution coin(0.5);
    std::vector<float> v(n);
    for (float& x : v) x = coin(rng) ? 1.0f : -1.0f;
    return v;
}

inline std::vector<double> random_reals(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

inline Tensor random_tensor(std::vector<std::size_t> dims, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
    Tensor t(std::move(dims));
    std::uniform_real_distribution<float> u(lo, hi);
    for (float& x : t.storage()) x = u(rng);
    return t;
}

inline Tensor sign_tensor(std::vector<std::size_t> dims, std::mt19937_64& rng) {
    Tensor t(std::move(dims));
    std::bernoulli_distribution coin(0.5);
    for (float& x : t.storage()) x = coin(rng) ? 1.0f : -1.0f;
    return t;
}

/// Central-difference gradient of a scalar function of `x`.
inline std::vector<double> numeric_grad(std::vector<double>& x, const std::function<double()>& f, double h = 1e-3) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f();
        x[i] = keep - h;
        const double down = f();
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// max |a-b| / max(1, |a|, |b|) over all entries.
inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({1.0, std::fabs(a[i]), std::fabs(b[i])});
        worst = std::max(worst, std::fabs(a[i] - b[i]) / scale);
    }
    return worst;
}

/// Dataset root from BITGRAD_DATA_DIR or the configured default, if it holds `kind`.
inline std::optional<std::filesystem::path> dataset_root(data::DatasetKind kind) {
#ifdef BITGRAD_TEST_DATA_DIR
    const std::filesystem::path root = data::data_dir(BITGRAD_TEST_DATA_DIR);
#else
    const std::filesystem::path root = data::data_dir();
#endif
    if (root.empty() || !data::locate_dataset(root, kind)) return std::nullopt;
    return root;
}

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("bitgrad_test_" + std::to_string(rd()) + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace bitgrad::testkit
