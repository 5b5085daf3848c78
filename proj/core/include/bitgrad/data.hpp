#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "bitgrad/tensor.hpp"

namespace bitgrad::data {

struct DatasetSplit {
    Tensor images;  // N,C,H,W
    std::vector<int> labels;
    std::size_t classes = 10;

    std::size_t size() const noexcept { return labels.size(); }
    Shape sample_shape() const;
};

struct ChannelStats {
    std::vector<float> mean;
    std::vector<float> stddev;

    bool operator==(const ChannelStats&) const = default;
};

struct Dataset {
    DatasetSplit train;
    DatasetSplit test;
    /// Train-split statistics used to standardize both splits.
    ChannelStats stats;
};

/// Raw IDX pair, pixels scaled to [0,1].
DatasetSplit read_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Expects train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-images-idx3-ubyte and
/// t10k-labels-idx1-ubyte in `dir`. Standardized with train statistics.
Dataset load_mnist(const std::filesystem::path& dir);

/// Raw CIFAR-10 binary batch file (label byte + 3072 pixel bytes per record), pixels in [0,1].
DatasetSplit read_cifar_batch(const std::filesystem::path& file);

/// Expects data_batch_1..5.bin and test_batch.bin in `dir`. Standardized with train statistics.
Dataset load_cifar10(const std::filesystem::path& dir);

ChannelStats channel_stats(const DatasetSplit& split);
void standardize(DatasetSplit& split, const ChannelStats& stats);

/// $BITGRAD_DATA_DIR if set, else `fallback`.
std::filesystem::path data_dir(const std::filesystem::path& fallback = {});

enum class DatasetKind : std::uint8_t { Mnist, Cifar10 };
std::string_view to_string(DatasetKind kind) noexcept;

/// 1x28x28 inputs read MNIST, 3x32x32 inputs CIFAR-10; anything else throws InvalidConfig.
DatasetKind dataset_for(const Shape& input);

/// `root` if the files sit there directly, else root/mnist for MNIST and
/// root/cifar-10-batches-bin or root/cifar10 for CIFAR-10.
std::optional<std::filesystem::path> locate_dataset(const std::filesystem::path& root, DatasetKind kind);

/// MissingFile if locate_dataset finds nothing.
Dataset load_dataset(const std::filesystem::path& root, DatasetKind kind);

struct AugmentPolicy {
    std::size_t pad = 0;
    /// Crop extent; 0 keeps the input extent.
    std::size_t crop = 0;
    bool hflip = false;

    void validate(const Shape& sample) const;
    bool identity() const noexcept { return pad == 0 && crop == 0 && !hflip; }
    bool operator==(const AugmentPolicy&) const = default;
};

/// Zero-pads one C,H,W image by `pad`, crops crop x crop at (top, left) of
/// the padded image and optionally mirrors it horizontally.
void crop_flip(const float* src, const Shape& sample, std::size_t pad, std::size_t crop, std::size_t top,
               std::size_t left, bool flip, float* dst);

/// Random pad-crop and flip for every image in the batch.
Tensor augment(const Tensor& batch, const AugmentPolicy& policy, std::mt19937_64& rng);

struct Batch {
    Tensor images;
    std::vector<int> labels;
};

Batch gather(const DatasetSplit& split, std::span<const std::size_t> indices);

/// Walks a split in (optionally shuffled) order. The final short batch is kept.
class BatchIterator {
public:
    BatchIterator(const DatasetSplit& split, std::size_t batch_size, std::mt19937_64* shuffle_rng = nullptr,
                  std::size_t limit = 0);

    bool next(Batch& out);
    std::size_t batches() const noexcept;

private:
    const DatasetSplit* split_;
    std::size_t batch_size_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

}  // namespace bitgrad::data
