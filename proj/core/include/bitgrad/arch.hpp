#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bitgrad/binarize.hpp"
#include "bitgrad/nn/graph.hpp"
#include "bitgrad/tensor.hpp"

namespace bitgrad::arch {

enum class Family : std::uint8_t { LeNet = 0, ResNetE18 = 1, ResNetE34 = 2, DenseNetE = 3 };

enum class BlockKind : std::uint8_t {
    ResNetBottleneck = 0,
    ResNetPlain = 1,
    ResNetE = 2,
    DenseNetBottleneck = 3,
    DenseNetPlain = 4,
    DenseNetE = 5,
};

enum class DownsamplingMode : std::uint8_t { BinaryLowReduction = 0, FullPrecisionHighReduction = 1 };

std::string_view to_string(Family f) noexcept;
std::string_view to_string(BlockKind b) noexcept;
std::string_view to_string(DownsamplingMode d) noexcept;

bool is_resnet(BlockKind b) noexcept;

struct ArchSpec {
    Family family = Family::LeNet;
    BlockKind block = BlockKind::ResNetE;
    /// DenseNet: number of binary 3x3 convolutions.
    std::size_t blocks = 0;
    std::size_t growth_rate = 0;
    /// Channel divisor per transition; empty selects the downsampling default.
    std::vector<double> reduction;
    DownsamplingMode downsampling = DownsamplingMode::BinaryLowReduction;
    std::size_t classes = 10;
    /// Per-sample input extents (n is ignored).
    Shape input{1, 1, 28, 28};
    /// Binary convolutions per stage; empty selects the family default.
    std::vector<std::size_t> stages;
    /// LeNet: first conv filters, binary conv filters, binary dense units.
    std::vector<std::size_t> widths;
    std::size_t stem_channels = 64;

    BackwardRule backward = BackwardRule::SteSign;
    float clip_threshold = 1.0f;
    ScalingMode scaling = ScalingMode::None;
    bool scale_backward_only = false;

    void validate() const;
    std::vector<double> reductions() const;
    std::vector<std::size_t> stage_split() const;
    std::vector<std::size_t> lenet_widths() const;
    nn::BinarySpec binary_spec() const;
    /// ImageNet-style stem (7x7 stride 2 + max pool) for large inputs.
    bool large_input() const noexcept { return input.h >= 64; }

    bool operator==(const ArchSpec&) const = default;
};

/// Parses key=value lines; '#' starts a comment.
ArchSpec parse_arch(std::string_view text);
ArchSpec load_arch(const std::filesystem::path& path);
/// Canonical config text; parse_arch(format_arch(s)) == s.
std::string format_arch(const ArchSpec& spec);

struct BlockOptions {
    /// ResNet kinds: output channels. DenseNet kinds: growth rate k.
    std::size_t channels = 0;
    std::size_t stride = 1;
    DownsamplingMode downsampling = DownsamplingMode::BinaryLowReduction;
    nn::BinarySpec binary;
    std::string name;
};

/// Appends one building block after `x` and returns its output node.
nn::NodeId build_block(nn::Graph& g, BlockKind kind, nn::NodeId x, const BlockOptions& opt);

/// Complete trainable graph ending in a softmax cross-entropy node.
nn::Graph build_network(const ArchSpec& spec);

/// Binary LeNet for 1x28x28 inputs.
nn::Graph lenet_binary(std::size_t classes = 10, std::vector<std::size_t> widths = {});

struct LayerSize {
    std::string name;
    nn::LayerKind kind = nn::LayerKind::Input;
    std::size_t binary_params = 0;
    std::size_t fp_params = 0;
    std::size_t bytes = 0;
};

struct SizeReport {
    std::size_t binary_param_count = 0;
    std::size_t fp_param_count = 0;
    std::size_t size_bytes = 0;
    std::vector<LayerSize> breakdown;

    double kib() const noexcept { return static_cast<double>(size_bytes) / 1024.0; }
    double mib() const noexcept { return static_cast<double>(size_bytes) / (1024.0 * 1024.0); }
};

/// Binary weights at one bit (rounded up to whole bytes per layer), real
/// weights, biases and batch-norm gamma/beta at 32 bits. Running statistics
/// are not counted.
SizeReport size_report(const nn::Graph& graph);
SizeReport size_report(const ArchSpec& spec);

/// Convolution and dense layers on the main path (shortcut projections excluded).
std::size_t depth(const nn::Graph& graph);
/// Add and Concat junctions.
std::size_t shortcut_count(const nn::Graph& graph);

}  // namespace bitgrad::arch
