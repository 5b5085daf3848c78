#include "bitgrad/nn/graph.hpp"

#include <string>

#include "bitgrad/error.hpp"

namespace bitgrad::nn {

std::string_view to_string(LayerKind kind) noexcept {
    switch (kind) {
        case LayerKind::Input: return "Input";
        case LayerKind::Conv: return "Conv";
        case LayerKind::BinaryConv: return "BinaryConv";
        case LayerKind::Dense: return "Dense";
        case LayerKind::BinaryDense: return "BinaryDense";
        case LayerKind::BatchNorm: return "BatchNorm";
        case LayerKind::MaxPool: return "MaxPool";
        case LayerKind::AvgPool: return "AvgPool";
        case LayerKind::GlobalAvgPool: return "GlobalAvgPool";
        case LayerKind::ReLU: return "ReLU";
        case LayerKind::SignAct: return "SignAct";
        case LayerKind::Add: return "Add";
        case LayerKind::Concat: return "Concat";
        case LayerKind::Flatten: return "Flatten";
        case LayerKind::SoftmaxXEnt: return "SoftmaxXEnt";
    }
    return "Unknown";
}

void BatchNormConfig::validate() const {
    if (!(epsilon > 0.0f)) fail(ErrorCode::InvalidConfig, "batch norm epsilon must be positive");
    if (!(momentum > 0.0f && momentum < 1.0f)) fail(ErrorCode::InvalidConfig, "batch norm momentum must be in (0,1)");
}

bool Node::has_weights() const noexcept {
    switch (kind) {
        case LayerKind::Conv:
        case LayerKind::BinaryConv:
        case LayerKind::Dense:
        case LayerKind::BinaryDense:
        case LayerKind::BatchNorm: return true;
        default: return false;
    }
}

Graph::Graph(Shape input) {
    if (input.c == 0 || input.h == 0 || input.w == 0) fail(ErrorCode::InvalidConfig, "empty input shape");
    Node n;
    n.kind = LayerKind::Input;
    n.name = "input";
    n.out = {1, input.c, input.h, input.w};
    nodes_.push_back(std::move(n));
}

const Node& Graph::checked(NodeId id) const {
    if (id >= nodes_.size()) fail(ErrorCode::InvalidConfig, "unknown node id " + std::to_string(id));
    if (nodes_[id].kind == LayerKind::SoftmaxXEnt) fail(ErrorCode::InvalidConfig, "loss node has no consumers");
    return nodes_[id];
}

NodeId Graph::push(Node n) {
    if (n.name.empty()) n.name = std::string(to_string(n.kind)) + "_" + std::to_string(nodes_.size());
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

NodeId Graph::conv(NodeId x, std::size_t filters, ConvGeometry g, bool bias, std::string name) {
    const Shape in = checked(x).out;
    if (filters == 0) fail(ErrorCode::InvalidConfig, "conv needs at least one filter");
    Node n;
    n.kind = LayerKind::Conv;
    n.name = std::move(name);
    n.inputs = {x};
    n.geometry = g;
    n.units = filters;
    n.fan_in_units = in.c;
    n.bias = bias;
    n.out = conv_out_shape(in, filters, g);
    return push(std::move(n));
}

NodeId Graph::binary_conv(NodeId x, std::size_t filters, ConvGeometry g, BinarySpec spec, std::string name) {
    spec.binarize.validate();
    const NodeId id = conv(x, filters, g, false, std::move(name));
    nodes_[id].kind = LayerKind::BinaryConv;
    nodes_[id].binary = spec;
    if (nodes_[id].name.rfind("Conv_", 0) == 0) nodes_[id].name = "BinaryConv_" + std::to_string(id);
    return id;
}

NodeId Graph::dense(NodeId x, std::size_t units, bool bias, std::string name) {
    const Shape in = checked(x).out;
    if (units == 0) fail(ErrorCode::InvalidConfig, "dense layer needs at least one unit");
    Node n;
    n.kind = LayerKind::Dense;
    n.name = std::move(name);
    n.inputs = {x};
    n.units = units;
    n.fan_in_units = in.per_sample();
    n.bias = bias;
    n.out = {1, units, 1, 1};
    return push(std::move(n));
}

NodeId Graph::binary_dense(NodeId x, std::size_t units, BinarySpec spec, std::string name) {
    spec.binarize.validate();
    if (spec.scaling == ScalingMode::InputK) fail(ErrorCode::InvalidConfig, "input scaling needs a convolution");
    const NodeId id = dense(x, units, false, std::move(name));
    nodes_[id].kind = LayerKind::BinaryDense;
    nodes_[id].binary = spec;
    if (nodes_[id].name.rfind("Dense_", 0) == 0) nodes_[id].name = "BinaryDense_" + std::to_string(id);
    return id;
}

NodeId Graph::batch_norm(NodeId x, BatchNormConfig cfg, std::string name) {
    cfg.validate();
    Node n;
    n.kind = LayerKind::BatchNorm;
    n.name = std::move(name);
    n.inputs = {x};
    n.out = checked(x).out;
    n.units = n.out.c;
    n.batch_norm = cfg;
    return push(std::move(n));
}

NodeId Graph::max_pool(NodeId x, ConvGeometry g, std::string name) {
    Node n;
    n.kind = LayerKind::MaxPool;
    n.name = std::move(name);
    n.inputs = {x};
    n.geometry = g;
    const Shape in = checked(x).out;
    n.out = conv_out_shape(in, in.c, g);
    return push(std::move(n));
}

NodeId Graph::avg_pool(NodeId x, ConvGeometry g, std::string name) {
    const NodeId id = max_pool(x, g, std::move(name));
    nodes_[id].kind = LayerKind::AvgPool;
    if (nodes_[id].name.rfind("MaxPool_", 0) == 0) nodes_[id].name = "AvgPool_" + std::to_string(id);
    return id;
}

NodeId Graph::global_avg_pool(NodeId x, std::string name) {
    Node n;
    n.kind = LayerKind::GlobalAvgPool;
    n.name = std::move(name);
    n.inputs = {x};
    n.out = {1, checked(x).out.c, 1, 1};
    return push(std::move(n));
}

NodeId Graph::relu(NodeId x, std::string name) {
    Node n;
    n.kind = LayerKind::ReLU;
    n.name = std::move(name);
    n.inputs = {x};
    n.out = checked(x).out;
    return push(std::move(n));
}

NodeId Graph::sign(NodeId x, BinarizeConfig cfg, std::string name) {
    cfg.validate();
    Node n;
    n.kind = LayerKind::SignAct;
    n.name = std::move(name);
    n.inputs = {x};
    n.out = checked(x).out;
    n.binary.binarize = cfg;
    return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b, std::string name) {
    const Shape sa = checked(a).out;
    const Shape sb = checked(b).out;
    if (!(sa == sb)) fail(ErrorCode::ShapeMismatch, "add of " + to_string(sa) + " and " + to_string(sb));
    Node n;
    n.kind = LayerKind::Add;
    n.name = std::move(name);
    n.inputs = {a, b};
    n.out = sa;
    return push(std::move(n));
}

NodeId Graph::concat(std::vector<NodeId> xs, std::string name) {
    if (xs.empty()) fail(ErrorCode::InvalidConfig, "concat needs inputs");
    Shape out = checked(xs.front()).out;
    out.c = 0;
    for (NodeId x : xs) {
        const Shape s = checked(x).out;
        if (s.h != out.h || s.w != out.w) {
            fail(ErrorCode::ShapeMismatch, "concat spatial extents differ: " + to_string(s));
        }
        out.c += s.c;
    }
    Node n;
    n.kind = LayerKind::Concat;
    n.name = std::move(name);
    n.inputs = std::move(xs);
    n.out = out;
    return push(std::move(n));
}

NodeId Graph::flatten(NodeId x, std::string name) {
    Node n;
    n.kind = LayerKind::Flatten;
    n.name = std::move(name);
    n.inputs = {x};
    n.out = {1, checked(x).out.per_sample(), 1, 1};
    return push(std::move(n));
}

NodeId Graph::softmax_xent(NodeId logits, std::string name) {
    if (has_loss()) fail(ErrorCode::InvalidConfig, "graph already has a loss node");
    Node n;
    n.kind = LayerKind::SoftmaxXEnt;
    n.name = name.empty() ? "loss" : std::move(name);
    n.inputs = {logits};
    const Shape s = checked(logits).out;
    if (s.h != 1 || s.w != 1) fail(ErrorCode::ShapeMismatch, "loss expects flat logits, got " + to_string(s));
    n.out = {1, 1, 1, 1};
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

NodeId Graph::logits() const noexcept {
    return has_loss() ? nodes_.back().inputs.front() : nodes_.size() - 1;
}

std::vector<std::vector<NodeId>> Graph::consumers() const {
    std::vector<std::vector<NodeId>> out(nodes_.size());
    for (NodeId id = 0; id < nodes_.size(); ++id) {
        for (NodeId in : nodes_[id].inputs) out[in].push_back(id);
    }
    return out;
}

}  // namespace bitgrad::nn
