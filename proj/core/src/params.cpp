#include "bitgrad/nn/params.hpp"

namespace bitgrad::nn {

namespace {

void allocate(const Graph& graph, std::vector<LayerParams>& layers, bool with_stats) {
    layers.resize(graph.size());
    for (NodeId id = 0; id < graph.size(); ++id) {
        const Node& n = graph.node(id);
        LayerParams& p = layers[id];
        switch (n.kind) {
            case LayerKind::Conv:
            case LayerKind::BinaryConv:
                p.weight = Tensor({n.units, n.fan_in_units * n.geometry.kh * n.geometry.kw});
                break;
            case LayerKind::Dense:
            case LayerKind::BinaryDense:
                p.weight = Tensor({n.units, n.fan_in_units});
                break;
            case LayerKind::BatchNorm:
                p.gamma = Tensor({n.units}, with_stats ? 1.0f : 0.0f);
                p.beta = Tensor({n.units});
                if (with_stats) {
                    p.running_mean = Tensor({n.units});
                    p.running_var = Tensor({n.units}, 1.0f);
                }
                break;
            default: break;
        }
        if (n.bias) p.bias = Tensor({n.units});
    }
}

template <class Store, class Fn>
void visit_trainable(Store& layers, const Fn& fn) {
    for (NodeId id = 0; id < layers.size(); ++id) {
        auto& p = layers[id];
        if (!p.weight.empty()) fn(id, "weight", p.weight);
        if (!p.bias.empty()) fn(id, "bias", p.bias);
        if (!p.gamma.empty()) fn(id, "gamma", p.gamma);
        if (!p.beta.empty()) fn(id, "beta", p.beta);
    }
}

template <class Store, class Fn>
void visit_stats(Store& layers, const Fn& fn) {
    for (NodeId id = 0; id < layers.size(); ++id) {
        auto& p = layers[id];
        if (!p.running_mean.empty()) fn(id, "running_mean", p.running_mean);
        if (!p.running_var.empty()) fn(id, "running_var", p.running_var);
    }
}

}  // namespace

ParamStore::ParamStore(const Graph& graph) { allocate(graph, layers_, true); }

ParamStore ParamStore::zeros_like(const Graph& graph) {
    ParamStore s;
    allocate(graph, s.layers_, false);
    return s;
}

void ParamStore::for_each_trainable(const Visitor& fn) { visit_trainable(layers_, fn); }
void ParamStore::for_each_trainable(const ConstVisitor& fn) const { visit_trainable(layers_, fn); }

void ParamStore::for_each(const ConstVisitor& fn) const {
    visit_trainable(layers_, fn);
    visit_stats(layers_, fn);
}

void ParamStore::for_each(const Visitor& fn) {
    visit_trainable(layers_, fn);
    visit_stats(layers_, fn);
}

std::size_t ParamStore::trainable_count() const {
    std::size_t total = 0;
    for_each_trainable(ConstVisitor([&](NodeId, std::string_view, const Tensor& t) { total += t.size(); }));
    return total;
}

void ParamStore::zero() {
    for (auto& p : layers_) {
        for (Tensor* t : {&p.weight, &p.bias, &p.gamma, &p.beta}) t->fill(0.0f);
    }
}

}  // namespace bitgrad::nn
