#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bitgrad/binarize.hpp"
#include "bitgrad/kernels.hpp"
#include "bitgrad/tensor.hpp"

namespace bitgrad::nn {

enum class LayerKind : std::uint8_t {
    Input,
    Conv,
    BinaryConv,
    Dense,
    BinaryDense,
    BatchNorm,
    MaxPool,
    AvgPool,
    GlobalAvgPool,
    ReLU,
    SignAct,
    Add,
    Concat,
    Flatten,
    SoftmaxXEnt,
};

std::string_view to_string(LayerKind kind) noexcept;

using NodeId = std::size_t;

struct BatchNormConfig {
    float epsilon = 1e-5f;
    float momentum = 0.9f;

    void validate() const;
};

/// Binarization settings of a BinaryConv / BinaryDense node. Both the input
/// and the latent weights go through sign() with `binarize`'s backward rule.
struct BinarySpec {
    BinarizeConfig binarize;
    ScalingMode scaling = ScalingMode::None;
    /// Apply the weight scale only to the weight gradient, not the forward.
    bool scale_backward_only = false;
};

struct Node {
    LayerKind kind = LayerKind::Input;
    std::string name;
    std::vector<NodeId> inputs;
    /// Per-sample output extents (n == 1).
    Shape out;

    // Conv / BinaryConv / pooling window.
    ConvGeometry geometry;
    // Conv, BinaryConv: filters. Dense, BinaryDense: output features.
    std::size_t units = 0;
    // Conv / Dense: input channels or features (derived).
    std::size_t fan_in_units = 0;
    bool bias = false;
    BinarySpec binary;
    BatchNormConfig batch_norm;

    bool has_weights() const noexcept;
    bool is_binary() const noexcept { return kind == LayerKind::BinaryConv || kind == LayerKind::BinaryDense; }
};

/// Acyclic layer graph built in topological order: every node only refers to
/// nodes created before it. Shapes are inferred (and checked) on insertion.
class Graph {
public:
    explicit Graph(Shape input);

    NodeId input() const noexcept { return 0; }
    const Shape& input_shape() const noexcept { return nodes_.front().out; }

    NodeId conv(NodeId x, std::size_t filters, ConvGeometry g, bool bias, std::string name = {});
    NodeId binary_conv(NodeId x, std::size_t filters, ConvGeometry g, BinarySpec spec = {}, std::string name = {});
    NodeId dense(NodeId x, std::size_t units, bool bias, std::string name = {});
    NodeId binary_dense(NodeId x, std::size_t units, BinarySpec spec = {}, std::string name = {});
    NodeId batch_norm(NodeId x, BatchNormConfig cfg = {}, std::string name = {});
    NodeId max_pool(NodeId x, ConvGeometry g, std::string name = {});
    NodeId avg_pool(NodeId x, ConvGeometry g, std::string name = {});
    NodeId global_avg_pool(NodeId x, std::string name = {});
    NodeId relu(NodeId x, std::string name = {});
    NodeId sign(NodeId x, BinarizeConfig cfg = {}, std::string name = {});
    NodeId add(NodeId a, NodeId b, std::string name = {});
    NodeId concat(std::vector<NodeId> xs, std::string name = {});
    NodeId flatten(NodeId x, std::string name = {});
    /// Terminal loss node over class logits.
    NodeId softmax_xent(NodeId logits, std::string name = {});

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    const Node& node(NodeId id) const { return nodes_.at(id); }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Node whose output the executor reports as logits: the input of the
    /// loss node if present, otherwise the last node.
    NodeId logits() const noexcept;
    bool has_loss() const noexcept { return nodes_.back().kind == LayerKind::SoftmaxXEnt; }
    std::size_t classes() const { return node(logits()).out.c; }

    /// Consumers of each node.
    std::vector<std::vector<NodeId>> consumers() const;

private:
    NodeId push(Node n);
    const Node& checked(NodeId id) const;

    std::vector<Node> nodes_;
};

}  // namespace bitgrad::nn
