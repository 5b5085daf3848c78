#include "bitgrad/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <string>

#include "bitgrad/error.hpp"

namespace bitgrad::data {

namespace {

constexpr std::uint32_t kIdxImages = 2051;
constexpr std::uint32_t kIdxLabels = 2049;
constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarRecord = 1 + 3 * kCifarSide * kCifarSide;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::MissingFile, "cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at, const std::filesystem::path& path) {
    if (b.size() < at + 4) fail(ErrorCode::TruncatedFile, path.string() + ": header cut short");
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
           std::uint32_t{b[at + 3]};
}

void check_magic(std::uint32_t got, std::uint32_t want, const std::filesystem::path& path) {
    if (got != want) {
        fail(ErrorCode::BadMagic, path.string() + ": magic " + std::to_string(got) + ", expected " + std::to_string(want));
    }
}

}  // namespace

Shape DatasetSplit::sample_shape() const {
    Shape s = images.shape();
    s.n = 1;
    return s;
}

DatasetSplit read_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    const auto ib = read_file(images);
    const auto lb = read_file(labels);
    check_magic(be32(ib, 0, images), kIdxImages, images);
    check_magic(be32(lb, 0, labels), kIdxLabels, labels);
    const std::size_t n = be32(ib, 4, images);
    const std::size_t rows = be32(ib, 8, images);
    const std::size_t cols = be32(ib, 12, images);
    const std::size_t nl = be32(lb, 4, labels);
    if (n != nl) {
        fail(ErrorCode::ShapeMismatch, std::to_string(n) + " images but " + std::to_string(nl) + " labels");
    }
    if (ib.size() < 16 + n * rows * cols) fail(ErrorCode::TruncatedFile, images.string() + ": pixel data cut short");
    if (lb.size() < 8 + n) fail(ErrorCode::TruncatedFile, labels.string() + ": label data cut short");

    DatasetSplit split;
    split.images = Tensor({n, 1, rows, cols});
    auto px = split.images.data();
    for (std::size_t i = 0; i < n * rows * cols; ++i) px[i] = static_cast<float>(ib[16 + i]) / 255.0f;
    split.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        split.labels[i] = lb[8 + i];
        if (split.labels[i] >= 10) fail(ErrorCode::InvalidConfig, labels.string() + ": label out of range");
    }
    return split;
}

Dataset load_mnist(const std::filesystem::path& dir) {
    Dataset ds;
    ds.train = read_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    ds.test = read_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
    ds.stats = channel_stats(ds.train);
    standardize(ds.train, ds.stats);
    standardize(ds.test, ds.stats);
    return ds;
}

DatasetSplit read_cifar_batch(const std::filesystem::path& file) {
    const auto b = read_file(file);
    if (b.empty() || b.size() % kCifarRecord != 0) {
        fail(ErrorCode::TruncatedFile, file.string() + ": size " + std::to_string(b.size()) +
                                           " is not a whole number of records");
    }
    const std::size_t n = b.size() / kCifarRecord;
    const std::size_t plane = kCifarSide * kCifarSide;
    DatasetSplit split;
    split.images = Tensor({n, 3, kCifarSide, kCifarSide});
    split.labels.resize(n);
    auto px = split.images.data();
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* rec = b.data() + i * kCifarRecord;
        if (rec[0] >= 10) fail(ErrorCode::InvalidConfig, file.string() + ": label out of range");
        split.labels[i] = rec[0];
        for (std::size_t j = 0; j < 3 * plane; ++j) px[i * 3 * plane + j] = static_cast<float>(rec[1 + j]) / 255.0f;
    }
    return split;
}

Dataset load_cifar10(const std::filesystem::path& dir) {
    Dataset ds;
    std::vector<DatasetSplit> parts;
    std::size_t total = 0;
    for (int i = 1; i <= 5; ++i) {
        parts.push_back(read_cifar_batch(dir / ("data_batch_" + std::to_string(i) + ".bin")));
        total += parts.back().size();
    }
    const std::size_t per = 3 * kCifarSide * kCifarSide;
    ds.train.images = Tensor({total, 3, kCifarSide, kCifarSide});
    std::size_t at = 0;
    for (const auto& p : parts) {
        std::copy(p.images.data().begin(), p.images.data().end(), ds.train.images.data().begin() + at * per);
        ds.train.labels.insert(ds.train.labels.end(), p.labels.begin(), p.labels.end());
        at += p.size();
    }
    ds.test = read_cifar_batch(dir / "test_batch.bin");
    ds.stats = channel_stats(ds.train);
    standardize(ds.train, ds.stats);
    standardize(ds.test, ds.stats);
    return ds;
}

ChannelStats channel_stats(const DatasetSplit& split) {
    const Shape s = split.images.shape();
    ChannelStats st;
    st.mean.resize(s.c);
    st.stddev.resize(s.c);
    const double count = static_cast<double>(s.n * s.plane());
    auto px = split.images.data();
    for (std::size_t c = 0; c < s.c; ++c) {
        double sum = 0.0;
        double sq = 0.0;
        for (std::size_t n = 0; n < s.n; ++n) {
            const float* p = px.data() + (n * s.c + c) * s.plane();
            for (std::size_t i = 0; i < s.plane(); ++i) {
                sum += p[i];
                sq += static_cast<double>(p[i]) * p[i];
            }
        }
        const double mu = sum / count;
        const double var = std::max(0.0, sq / count - mu * mu);
        st.mean[c] = static_cast<float>(mu);
        st.stddev[c] = static_cast<float>(var > 0.0 ? std::sqrt(var) : 1.0);
    }
    return st;
}

void standardize(DatasetSplit& split, const ChannelStats& stats) {
    const Shape s = split.images.shape();
    if (stats.mean.size() != s.c || stats.stddev.size() != s.c) {
        fail(ErrorCode::ShapeMismatch, "channel statistics do not match the images");
    }
    auto px = split.images.data();
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            float* p = px.data() + (n * s.c + c) * s.plane();
            const float mu = stats.mean[c];
            const float inv = 1.0f / stats.stddev[c];
            for (std::size_t i = 0; i < s.plane(); ++i) p[i] = (p[i] - mu) * inv;
        }
    }
}

std::filesystem::path data_dir(const std::filesystem::path& fallback) {
    if (const char* env = std::getenv("BITGRAD_DATA_DIR"); env != nullptr && *env != '\0') return env;
    return fallback;
}

std::string_view to_string(DatasetKind kind) noexcept {
    return kind == DatasetKind::Mnist ? "mnist" : "cifar10";
}

DatasetKind dataset_for(const Shape& input) {
    if (input.c == 1 && input.h == 28 && input.w == 28) return DatasetKind::Mnist;
    if (input.c == 3 && input.h == 32 && input.w == 32) return DatasetKind::Cifar10;
    fail(ErrorCode::InvalidConfig, "no dataset loader for input " + to_string(input));
}

std::optional<std::filesystem::path> locate_dataset(const std::filesystem::path& root, DatasetKind kind) {
    namespace fs = std::filesystem;
    const char* marker = kind == DatasetKind::Mnist ? "train-images-idx3-ubyte" : "data_batch_1.bin";
    std::vector<fs::path> candidates{root};
    if (kind == DatasetKind::Mnist) {
        candidates.push_back(root / "mnist");
    } else {
        candidates.push_back(root / "cifar-10-batches-bin");
        candidates.push_back(root / "cifar10");
    }
    for (const auto& dir : candidates) {
        std::error_code ec;
        if (fs::exists(dir / marker, ec)) return dir;
    }
    return std::nullopt;
}

Dataset load_dataset(const std::filesystem::path& root, DatasetKind kind) {
    const auto dir = locate_dataset(root, kind);
    if (!dir) fail(ErrorCode::MissingFile, std::string(to_string(kind)) + " files not found under " + root.string());
    return kind == DatasetKind::Mnist ? load_mnist(*dir) : load_cifar10(*dir);
}

void AugmentPolicy::validate(const Shape& sample) const {
    const std::size_t side = crop == 0 ? std::min(sample.h, sample.w) : crop;
    if (side > sample.h + 2 * pad || side > sample.w + 2 * pad) {
        fail(ErrorCode::InvalidConfig, "crop larger than the padded image");
    }
}

void crop_flip(const float* src, const Shape& sample, std::size_t pad, std::size_t crop, std::size_t top,
               std::size_t left, bool flip, float* dst) {
    for (std::size_t c = 0; c < sample.c; ++c) {
        const float* plane = src + c * sample.plane();
        float* out = dst + c * crop * crop;
        for (std::size_t y = 0; y < crop; ++y) {
            const auto sy = static_cast<std::ptrdiff_t>(top + y) - static_cast<std::ptrdiff_t>(pad);
            for (std::size_t x = 0; x < crop; ++x) {
                const std::size_t ox = flip ? crop - 1 - x : x;
                const auto sx = static_cast<std::ptrdiff_t>(left + x) - static_cast<std::ptrdiff_t>(pad);
                const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(sample.h) &&
                                    sx < static_cast<std::ptrdiff_t>(sample.w);
                out[y * crop + ox] =
                    inside ? plane[static_cast<std::size_t>(sy) * sample.w + static_cast<std::size_t>(sx)] : 0.0f;
            }
        }
    }
}

Tensor augment(const Tensor& batch, const AugmentPolicy& policy, std::mt19937_64& rng) {
    const Shape s = batch.shape();
    Shape sample = s;
    sample.n = 1;
    policy.validate(sample);
    if (policy.identity()) return batch;
    if (s.h != s.w) fail(ErrorCode::InvalidConfig, "augmentation expects square images");
    const std::size_t crop = policy.crop == 0 ? s.h : policy.crop;
    const std::size_t span = s.h + 2 * policy.pad - crop;
    std::uniform_int_distribution<std::size_t> offset(0, span);
    std::bernoulli_distribution coin(0.5);
    Tensor out({s.n, s.c, crop, crop});
    for (std::size_t n = 0; n < s.n; ++n) {
        const std::size_t top = offset(rng);
        const std::size_t left = offset(rng);
        const bool flip = policy.hflip && coin(rng);
        crop_flip(batch.data().data() + n * s.per_sample(), sample, policy.pad, crop, top, left, flip,
                  out.data().data() + n * s.c * crop * crop);
    }
    return out;
}

Batch gather(const DatasetSplit& split, std::span<const std::size_t> indices) {
    const Shape s = split.sample_shape();
    Batch b;
    b.images = Tensor({indices.size(), s.c, s.h, s.w});
    b.labels.resize(indices.size());
    const std::size_t per = s.per_sample();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t idx = indices[i];
        if (idx >= split.size()) fail(ErrorCode::InvalidConfig, "sample index out of range");
        std::copy_n(split.images.data().data() + idx * per, per, b.images.data().data() + i * per);
        b.labels[i] = split.labels[idx];
    }
    return b;
}

BatchIterator::BatchIterator(const DatasetSplit& split, std::size_t batch_size, std::mt19937_64* shuffle_rng,
                             std::size_t limit)
    : split_(&split), batch_size_(batch_size) {
    if (batch_size == 0) fail(ErrorCode::InvalidConfig, "batch size must be positive");
    order_.resize(split.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (shuffle_rng != nullptr) std::shuffle(order_.begin(), order_.end(), *shuffle_rng);
    if (limit != 0 && limit < order_.size()) order_.resize(limit);
}

bool BatchIterator::next(Batch& out) {
    if (pos_ >= order_.size()) return false;
    const std::size_t end = std::min(order_.size(), pos_ + batch_size_);
    out = gather(*split_, std::span<const std::size_t>(order_).subspan(pos_, end - pos_));
    pos_ = end;
    return true;
}

std::size_t BatchIterator::batches() const noexcept { return (order_.size() + batch_size_ - 1) / batch_size_; }

}  // namespace bitgrad::data
