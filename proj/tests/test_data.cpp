#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>

#include "bitgrad/data.hpp"
#include "bitgrad/error.hpp"
#include "support.hpp"

using namespace bitgrad;
using namespace bitgrad::data;
using testkit::TempDir;

namespace {

void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

void write_file(const std::filesystem::path& p, const std::vector<unsigned char>& b) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// Image i has every pixel equal to 10 * i + 5; label i % 10.
void write_idx_pair(const std::filesystem::path& dir, const std::string& prefix, std::size_t n,
                    std::size_t side = 28) {
    std::vector<unsigned char> img;
    put_be32(img, 2051);
    put_be32(img, static_cast<std::uint32_t>(n));
    put_be32(img, static_cast<std::uint32_t>(side));
    put_be32(img, static_cast<std::uint32_t>(side));
    for (std::size_t i = 0; i < n; ++i) img.insert(img.end(), side * side, static_cast<unsigned char>(10 * i + 5));
    std::vector<unsigned char> lab;
    put_be32(lab, 2049);
    put_be32(lab, static_cast<std::uint32_t>(n));
    for (std::size_t i = 0; i < n; ++i) lab.push_back(static_cast<unsigned char>(i % 10));
    write_file(dir / (prefix + "-images-idx3-ubyte"), img);
    write_file(dir / (prefix + "-labels-idx1-ubyte"), lab);
}

std::vector<unsigned char> cifar_records(std::size_t n, unsigned char base) {
    std::vector<unsigned char> b;
    for (std::size_t i = 0; i < n; ++i) {
        b.push_back(static_cast<unsigned char>((i + base) % 10));
        for (std::size_t c = 0; c < 3; ++c) b.insert(b.end(), 1024, static_cast<unsigned char>(base + 40 * c));
    }
    return b;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an error";
    return ErrorCode::Io;
}

}  // namespace

TEST(Idx, ReadsSyntheticFiles) {
    TempDir dir;
    write_idx_pair(dir.path(), "train", 3, 4);
    const DatasetSplit s = read_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s.sample_shape(), (Shape{1, 1, 4, 4}));
    EXPECT_EQ(s.labels, (std::vector<int>{0, 1, 2}));
    EXPECT_FLOAT_EQ(s.images.at(2, 0, 3, 3), 25.0f / 255.0f);
}

TEST(Idx, Errors) {
    TempDir dir;
    write_idx_pair(dir.path(), "train", 3, 4);
    const auto img = dir / "train-images-idx3-ubyte";
    const auto lab = dir / "train-labels-idx1-ubyte";
    EXPECT_EQ(code_of([&] { read_idx(dir / "absent", lab); }), ErrorCode::MissingFile);
    EXPECT_EQ(code_of([&] { read_idx(lab, lab); }), ErrorCode::BadMagic);

    TempDir bytes;
    std::vector<unsigned char> cut;
    put_be32(cut, 2051);
    put_be32(cut, 3);
    put_be32(cut, 4);
    put_be32(cut, 4);
    cut.resize(cut.size() + 20);
    write_file(bytes / "short", cut);
    EXPECT_EQ(code_of([&] { read_idx(bytes / "short", lab); }), ErrorCode::TruncatedFile);
    write_file(bytes / "header", {0, 0, 8});
    EXPECT_EQ(code_of([&] { read_idx(bytes / "header", lab); }), ErrorCode::TruncatedFile);
}

TEST(Mnist, LoadsAndStandardizesWithTrainStatistics) {
    TempDir dir;
    write_idx_pair(dir.path(), "train", 4);
    write_idx_pair(dir.path(), "t10k", 2);
    const Dataset ds = load_mnist(dir.path());
    // Train pixels are 5, 15, 25, 35 (over 255): mean 20, population stddev sqrt(125).
    EXPECT_NEAR(ds.stats.mean[0], 20.0f / 255.0f, 1e-6);
    EXPECT_NEAR(ds.stats.stddev[0], std::sqrt(125.0f) / 255.0f, 1e-5);
    EXPECT_NEAR(ds.test.images.at(0, 0, 0, 0), -15.0f / std::sqrt(125.0f), 1e-4);
    EXPECT_NEAR(ds.test.images.at(1, 0, 5, 5), -5.0f / std::sqrt(125.0f), 1e-4);
    EXPECT_EQ(locate_dataset(dir.path(), DatasetKind::Mnist), dir.path());
    EXPECT_FALSE(locate_dataset(dir.path(), DatasetKind::Cifar10));
    EXPECT_EQ(code_of([&] { load_dataset(dir.path(), DatasetKind::Cifar10); }), ErrorCode::MissingFile);
}

TEST(Cifar, ReadsBatchesAndRejectsPartialRecords) {
    TempDir dir;
    const auto sub = dir / "cifar-10-batches-bin";
    std::filesystem::create_directories(sub);
    for (int i = 1; i <= 5; ++i) write_file(sub / ("data_batch_" + std::to_string(i) + ".bin"), cifar_records(2, 10));
    write_file(sub / "test_batch.bin", cifar_records(3, 20));
    EXPECT_EQ(locate_dataset(dir.path(), DatasetKind::Cifar10), sub);
    const Dataset ds = load_dataset(dir.path(), DatasetKind::Cifar10);
    EXPECT_EQ(ds.train.size(), 10u);
    EXPECT_EQ(ds.test.size(), 3u);
    EXPECT_EQ(ds.train.sample_shape(), (Shape{1, 3, 32, 32}));
    EXPECT_EQ(ds.test.labels, (std::vector<int>{0, 1, 2}));
    // Channel c of every train image is 10 + 40c, so each channel standardizes to zero.
    EXPECT_NEAR(ds.stats.mean[2], 90.0f / 255.0f, 1e-6);
    EXPECT_FLOAT_EQ(ds.train.images.at(3, 1, 7, 7), 0.0f);

    auto partial = cifar_records(1, 0);
    partial.pop_back();
    write_file(sub / "broken.bin", partial);
    EXPECT_EQ(code_of([&] { read_cifar_batch(sub / "broken.bin"); }), ErrorCode::TruncatedFile);
}

TEST(DatasetFor, PicksLoaderFromInputShape) {
    EXPECT_EQ(dataset_for({1, 1, 28, 28}), DatasetKind::Mnist);
    EXPECT_EQ(dataset_for({1, 3, 32, 32}), DatasetKind::Cifar10);
    EXPECT_THROW(dataset_for({1, 3, 224, 224}), Error);
}

TEST(Augment, IdentityAndFlip) {
    std::mt19937_64 rng(1);
    const Tensor batch = testkit::random_tensor({2, 3, 6, 6}, rng);
    EXPECT_EQ(augment(batch, {}, rng), batch);

    std::vector<float> out(batch.shape().per_sample());
    crop_flip(batch.data().data(), {1, 3, 6, 6}, 0, 6, 0, 0, true, out.data());
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 6; ++y)
            for (std::size_t x = 0; x < 6; ++x) EXPECT_EQ(out[(c * 6 + y) * 6 + x], batch.at(0, c, y, 5 - x));
    crop_flip(batch.data().data(), {1, 3, 6, 6}, 2, 6, 2, 2, false, out.data());
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], batch[i]);
}

TEST(Augment, CropsStayInsidePaddedImage) {
    // Pixel value encodes its position, so each crop's origin can be read back.
    Tensor img({1, 1, 8, 8});
    for (std::size_t i = 0; i < 64; ++i) img[i] = static_cast<float>(i + 1);
    std::mt19937_64 rng(2);
    const AugmentPolicy policy{2, 8, true};
    std::set<std::pair<long, long>> origins;
    std::size_t flips = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const Tensor out = augment(img, policy, rng);
        ASSERT_EQ(out.dims(), img.dims());
        long first_y = -100, first_x = -100;
        bool found = false;
        for (std::size_t y = 0; y < 8 && !found; ++y)
            for (std::size_t x = 0; x < 8; ++x) {
                const float v = out.at(0, 0, y, x);
                if (v == 0.0f) continue;
                found = true;
                const auto src = static_cast<long>(v) - 1;
                first_y = static_cast<long>(y) - src / 8;
                first_x = static_cast<long>(x) - src % 8;
                // A mirrored crop reverses x; detect it by the neighbor order.
                if (x + 1 < 8 && out.at(0, 0, y, x + 1) != 0.0f && out.at(0, 0, y, x + 1) < v) {
                    ++flips;
                    first_x = -1000;
                }
                break;
            }
        ASSERT_GE(first_y, -2);
        ASSERT_LE(first_y, 2);
        if (first_x != -1000) {
            ASSERT_GE(first_x, -2);
            ASSERT_LE(first_x, 2);
            origins.insert({first_y, first_x});
        }
        for (float v : out.data()) ASSERT_TRUE(v == 0.0f || (v >= 1.0f && v <= 64.0f));
    }
    EXPECT_EQ(origins.size(), 25u);
    EXPECT_NEAR(static_cast<double>(flips) / 10000.0, 0.5, 0.03);
    EXPECT_THROW(augment(img, AugmentPolicy{0, 9, false}, rng), Error);
}

TEST(Standardize, ReusesGivenStatisticsAndLeavesSourceAlone) {
    std::mt19937_64 rng(3);
    DatasetSplit a;
    a.images = testkit::random_tensor({10, 2, 3, 3}, rng, 0.0f, 1.0f);
    a.labels.assign(10, 0);
    const ChannelStats st = channel_stats(a);
    DatasetSplit b = a;
    standardize(b, st);
    EXPECT_NE(a.images, b.images);
    const ChannelStats after = channel_stats(b);
    for (std::size_t c = 0; c < 2; ++c) {
        EXPECT_NEAR(after.mean[c], 0.0f, 1e-5);
        EXPECT_NEAR(after.stddev[c], 1.0f, 1e-4);
    }
    EXPECT_THROW(standardize(b, ChannelStats{{0.0f}, {1.0f}}), Error);
}

TEST(Batches, IteratorCoversSplitOnceAndKeepsShortTail) {
    DatasetSplit s;
    s.images = Tensor({10, 1, 1, 1});
    for (std::size_t i = 0; i < 10; ++i) {
        s.images[i] = static_cast<float>(i);
        s.labels.push_back(static_cast<int>(i));
    }
    std::mt19937_64 rng(4);
    BatchIterator it(s, 4, &rng);
    EXPECT_EQ(it.batches(), 3u);
    Batch b;
    std::multiset<int> seen;
    std::vector<std::size_t> sizes;
    while (it.next(b)) {
        sizes.push_back(b.labels.size());
        for (std::size_t i = 0; i < b.labels.size(); ++i) {
            EXPECT_EQ(b.images[i], static_cast<float>(b.labels[i]));
            seen.insert(b.labels[i]);
        }
    }
    EXPECT_EQ(sizes, (std::vector<std::size_t>{4, 4, 2}));
    EXPECT_EQ(seen.size(), 10u);
    EXPECT_EQ(std::set<int>(seen.begin(), seen.end()).size(), 10u);
    BatchIterator limited(s, 4, nullptr, 5);
    EXPECT_EQ(limited.batches(), 2u);
    EXPECT_THROW(BatchIterator(s, 0), Error);
}

TEST(RealMnist, CountsAndLabels) {
    const auto root = testkit::dataset_root(DatasetKind::Mnist);
    if (!root) GTEST_SKIP() << "MNIST not found; set BITGRAD_DATA_DIR";
    const Dataset ds = load_dataset(*root, DatasetKind::Mnist);
    EXPECT_EQ(ds.train.size(), 60000u);
    EXPECT_EQ(ds.test.size(), 10000u);
    std::vector<int> counts(10, 0);
    for (int l : ds.test.labels) ++counts.at(static_cast<std::size_t>(l));
    for (int c : counts) EXPECT_GT(c, 800);
    EXPECT_NEAR(mean(ds.train.images), 0.0f, 1e-3);
}
