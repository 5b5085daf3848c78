#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bitgrad/nn/graph.hpp"
#include "bitgrad/nn/params.hpp"
#include "bitgrad/tensor.hpp"

namespace bitgrad::nn {

enum class Mode : std::uint8_t { Train, Eval };

/// Runs a graph forward and backward. Holds activations and caches of the last
/// batch, so one executor serves one thread; frozen params can be shared.
class Executor {
public:
    explicit Executor(Graph graph);

    const Graph& graph() const noexcept { return graph_; }

    /// Train mode normalizes with batch statistics and folds them into the
    /// running statistics; eval mode uses the running statistics.
    const Tensor& forward(ParamStore& params, const Tensor& batch, Mode mode);
    /// Eval-mode forward that leaves params untouched.
    const Tensor& evaluate(const ParamStore& params, const Tensor& batch);

    const Tensor& output(NodeId id) const { return acts_.at(id); }
    /// Logits of the last forward, N x classes (x 1 x 1).
    const Tensor& logits() const { return acts_.at(graph_.logits()); }

    /// Mean softmax cross-entropy of the last forward against `labels`.
    double loss(std::span<const int> labels);

    /// Gradients of the last loss() into `grads` (overwritten; layout of
    /// ParamStore::zeros_like).
    void backward(const ParamStore& params, ParamStore& grads);
    /// Same, starting from an explicit gradient on the logits.
    void backward_from(const ParamStore& params, const Tensor& grad_logits, ParamStore& grads);

    /// Gradient on the network input after the last backward.
    const Tensor& input_grad() const { return dacts_.at(graph_.input()); }
    /// Training never reads the input gradient; turning it off saves the
    /// first convolution's data-gradient GEMM.
    void set_input_grad(bool enabled) noexcept { input_grad_ = enabled; }

private:
    struct BinaryCache {
        std::vector<float> xb;
        std::vector<float> wb;
        Tensor alpha;
        Tensor k_map;
    };
    struct NormCache {
        std::vector<float> mean;
        std::vector<float> var;
        std::vector<float> invstd;
        bool batch_stats = false;
    };

    void run(const ParamStore& params, const Tensor& batch, Mode mode, ParamStore* stats);
    void forward_node(NodeId id, const ParamStore& params, Mode mode, ParamStore* stats);
    void backward_node(NodeId id, const ParamStore& params, ParamStore& grads);
    Shape batch_shape(NodeId id) const;

    Graph graph_;
    std::size_t batch_ = 0;
    std::vector<Tensor> acts_;
    std::vector<Tensor> dacts_;
    std::vector<BinaryCache> binary_;
    std::vector<NormCache> norm_;
    std::vector<std::vector<std::uint32_t>> argmax_;
    std::vector<int> labels_;
    Tensor probs_;
    bool input_grad_ = true;
};

}  // namespace bitgrad::nn
