#pragma once

#include <functional>
#include <string_view>
#include <vector>

#include "bitgrad/nn/graph.hpp"
#include "bitgrad/tensor.hpp"

namespace bitgrad::nn {

/// Parameters of one node. Unused slots stay empty.
/// Conv weights are filters x (C*kh*kw); dense weights are out x in.
struct LayerParams {
    Tensor weight;
    Tensor bias;
    Tensor gamma;
    Tensor beta;
    Tensor running_mean;
    Tensor running_var;

    bool operator==(const LayerParams&) const = default;
};

/// Per-node parameter slots indexed by NodeId.
class ParamStore {
public:
    ParamStore() = default;
    /// Allocates every slot the graph needs: weights/biases zero, gamma and
    /// running_var one, beta and running_mean zero.
    explicit ParamStore(const Graph& graph);

    /// Same layout holding zeros in the trainable slots and no running stats.
    static ParamStore zeros_like(const Graph& graph);

    std::size_t size() const noexcept { return layers_.size(); }
    LayerParams& operator[](NodeId id) { return layers_.at(id); }
    const LayerParams& operator[](NodeId id) const { return layers_.at(id); }

    using Visitor = std::function<void(NodeId, std::string_view slot, Tensor&)>;
    using ConstVisitor = std::function<void(NodeId, std::string_view slot, const Tensor&)>;

    /// weight, bias, gamma, beta of every node, in node order.
    void for_each_trainable(const Visitor& fn);
    void for_each_trainable(const ConstVisitor& fn) const;
    /// Trainable slots followed by running statistics.
    void for_each(const ConstVisitor& fn) const;
    void for_each(const Visitor& fn);

    std::size_t trainable_count() const;
    void zero();

    bool operator==(const ParamStore&) const = default;

private:
    std::vector<LayerParams> layers_;
};

}  // namespace bitgrad::nn
