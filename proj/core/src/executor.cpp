#include "bitgrad/nn/executor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bitgrad/binarize.hpp"
#include "bitgrad/error.hpp"
#include "bitgrad/nn/ops.hpp"

namespace bitgrad::nn {

namespace {

std::span<const float> cspan(const Tensor& t) { return t.data(); }

void sign_into(std::span<const float> src, std::vector<float>& dst) {
    dst.resize(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = sign_value(src[i]);
}

// Forward multiplier of a binary layer output: per-filter / scalar weight
// scale and the spatial input map K. Both are treated as constants.
void apply_scales(const Node& node, const Tensor& alpha, const Tensor& k_map, const Shape& out, float* y) {
    const bool use_alpha = !alpha.empty() && !node.binary.scale_backward_only;
    if (!use_alpha && k_map.empty()) return;
    for (std::size_t n = 0; n < out.n; ++n) {
        for (std::size_t c = 0; c < out.c; ++c) {
            float* plane = y + (n * out.c + c) * out.plane();
            const float a = use_alpha ? (alpha.size() == 1 ? alpha[0] : alpha[c]) : 1.0f;
            if (k_map.empty()) {
                for (std::size_t p = 0; p < out.plane(); ++p) plane[p] *= a;
            } else {
                const float* kp = k_map.data().data() + n * out.plane();
                for (std::size_t p = 0; p < out.plane(); ++p) plane[p] *= a * kp[p];
            }
        }
    }
}

}  // namespace

Executor::Executor(Graph graph)
    : graph_(std::move(graph)),
      acts_(graph_.size()),
      dacts_(graph_.size()),
      binary_(graph_.size()),
      norm_(graph_.size()),
      argmax_(graph_.size()) {}

Shape Executor::batch_shape(NodeId id) const {
    Shape s = graph_.node(id).out;
    s.n = batch_;
    return s;
}

const Tensor& Executor::forward(ParamStore& params, const Tensor& batch, Mode mode) {
    run(params, batch, mode, mode == Mode::Train ? &params : nullptr);
    return logits();
}

const Tensor& Executor::evaluate(const ParamStore& params, const Tensor& batch) {
    run(params, batch, Mode::Eval, nullptr);
    return logits();
}

void Executor::run(const ParamStore& params, const Tensor& batch, Mode mode, ParamStore* stats) {
    if (params.size() != graph_.size()) fail(ErrorCode::ShapeMismatch, "parameter store does not match graph");
    const Shape in = batch.shape();
    const Shape want = graph_.input_shape();
    if (in.c != want.c || in.h != want.h || in.w != want.w || in.n == 0) {
        fail(ErrorCode::ShapeMismatch, "batch " + to_string(in) + " does not match input " + to_string(want));
    }
    batch_ = in.n;
    labels_.clear();
    for (NodeId id = 0; id < graph_.size(); ++id) {
        const Shape s = batch_shape(id);
        if (acts_[id].size() != s.size()) acts_[id] = Tensor(s);
    }
    acts_[0] = batch.reshaped({in.n, in.c, in.h, in.w});
    for (NodeId id = 1; id < graph_.size(); ++id) forward_node(id, params, mode, stats);
}

void Executor::forward_node(NodeId id, const ParamStore& params, Mode mode, ParamStore* stats) {
    const Node& node = graph_.node(id);
    const LayerParams& p = params[id];
    Tensor& y = acts_[id];
    const Shape out = batch_shape(id);
    const NodeId src = node.inputs.empty() ? 0 : node.inputs.front();
    const Tensor& x = acts_[src];
    const Shape in = batch_shape(src);

    switch (node.kind) {
        case LayerKind::Input: break;
        case LayerKind::Conv:
            ops::conv_forward<float>(cspan(x), in, cspan(p.weight), cspan(p.bias), node.units, node.geometry, 0.0f,
                                     y.data());
            break;
        case LayerKind::Dense:
            ops::dense_forward<float>(cspan(x), batch_, node.fan_in_units, cspan(p.weight), cspan(p.bias), node.units,
                                      y.data());
            break;
        case LayerKind::BinaryConv:
        case LayerKind::BinaryDense: {
            BinaryCache& bc = binary_[id];
            sign_into(cspan(x), bc.xb);
            sign_into(cspan(p.weight), bc.wb);
            const ScalingMode scaling = node.binary.scaling;
            bc.alpha = (scaling == ScalingMode::WeightPerChannel || scaling == ScalingMode::WeightScalar)
                           ? weight_scale(p.weight, scaling)
                           : Tensor();
            bc.k_map = Tensor();
            if (node.kind == LayerKind::BinaryConv) {
                // Spatial padding of the binarized input is +1, matching the packed path.
                ops::conv_forward<float>(bc.xb, in, bc.wb, {}, node.units, node.geometry, 1.0f, y.data());
                if (scaling == ScalingMode::InputK) {
                    bc.k_map = input_scale_K(x.reshaped({in.n, in.c, in.h, in.w}), node.geometry);
                }
            } else {
                ops::dense_forward<float>(bc.xb, batch_, node.fan_in_units, bc.wb, {}, node.units, y.data());
            }
            apply_scales(node, bc.alpha, bc.k_map, out, y.data().data());
            break;
        }
        case LayerKind::BatchNorm: {
            NormCache& nc = norm_[id];
            const std::size_t c = out.c;
            if (mode == Mode::Train) {
                nc.mean.resize(c);
                nc.var.resize(c);
                nc.invstd.resize(c);
                nc.batch_stats = true;
                ops::batchnorm_train_forward<float>(cspan(x), in, cspan(p.gamma), cspan(p.beta),
                                                    node.batch_norm.epsilon, y.data(), nc.mean, nc.var, nc.invstd);
                if (stats != nullptr) {
                    LayerParams& s = (*stats)[id];
                    const float m = node.batch_norm.momentum;
                    const double count = static_cast<double>(in.n * in.plane());
                    const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
                    for (std::size_t i = 0; i < c; ++i) {
                        s.running_mean[i] = m * s.running_mean[i] + (1.0f - m) * nc.mean[i];
                        s.running_var[i] =
                            m * s.running_var[i] + (1.0f - m) * static_cast<float>(nc.var[i] * unbias);
                    }
                }
            } else {
                nc.batch_stats = false;
                std::vector<float> scale(c);
                std::vector<float> shift(c);
                ops::batchnorm_fold<float>(cspan(p.gamma), cspan(p.beta), cspan(p.running_mean),
                                           cspan(p.running_var), node.batch_norm.epsilon, scale, shift);
                nc.invstd = scale;  // reused by the eval-mode backward
                ops::affine_channels<float>(cspan(x), in, scale, shift, y.data());
            }
            break;
        }
        case LayerKind::MaxPool:
            argmax_[id].resize(out.size());
            ops::max_pool_forward<float>(cspan(x), in, node.geometry, y.data(), argmax_[id]);
            break;
        case LayerKind::AvgPool:
            ops::avg_pool_forward<float>(cspan(x), in, node.geometry, y.data());
            break;
        case LayerKind::GlobalAvgPool:
            ops::global_avg_pool_forward<float>(cspan(x), in, y.data());
            break;
        case LayerKind::ReLU: {
            auto xs = x.data();
            auto ys = y.data();
            for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = xs[i] > 0.0f ? xs[i] : 0.0f;
            break;
        }
        case LayerKind::SignAct: {
            auto xs = x.data();
            auto ys = y.data();
            for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = sign_value(xs[i]);
            break;
        }
        case LayerKind::Add: {
            auto a = x.data();
            auto b = acts_[node.inputs[1]].data();
            auto ys = y.data();
            for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = a[i] + b[i];
            break;
        }
        case LayerKind::Concat: {
            std::size_t offset = 0;
            for (NodeId part : node.inputs) {
                const Shape ps = batch_shape(part);
                const float* s = acts_[part].data().data();
                for (std::size_t n = 0; n < batch_; ++n) {
                    std::copy_n(s + n * ps.per_sample(), ps.per_sample(),
                                y.data().data() + n * out.per_sample() + offset);
                }
                offset += ps.per_sample();
            }
            break;
        }
        case LayerKind::Flatten: std::copy(x.data().begin(), x.data().end(), y.data().begin()); break;
        case LayerKind::SoftmaxXEnt: y.fill(0.0f); break;
    }
}

double Executor::loss(std::span<const int> labels) {
    if (!graph_.has_loss()) fail(ErrorCode::InvalidConfig, "graph has no loss node");
    if (labels.size() != batch_) {
        fail(ErrorCode::LengthMismatch, std::to_string(labels.size()) + " labels for a batch of " +
                                            std::to_string(batch_));
    }
    const std::size_t classes = graph_.classes();
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= classes) fail(ErrorCode::InvalidConfig, "label out of range");
    }
    labels_.assign(labels.begin(), labels.end());
    if (probs_.size() != batch_ * classes) probs_ = Tensor({batch_, classes});
    const double value = ops::softmax_xent_forward<float>(cspan(logits()), batch_, classes, labels_, probs_.data());
    acts_.back().fill(static_cast<float>(value));
    return value;
}

void Executor::backward(const ParamStore& params, ParamStore& grads) {
    if (labels_.size() != batch_ || batch_ == 0) fail(ErrorCode::InvalidConfig, "backward needs a loss first");
    Tensor dlogits({batch_, graph_.classes()});
    ops::softmax_xent_backward<float>(cspan(probs_), batch_, graph_.classes(), labels_, dlogits.data());
    backward_from(params, dlogits, grads);
}

void Executor::backward_from(const ParamStore& params, const Tensor& grad_logits, ParamStore& grads) {
    const NodeId head = graph_.logits();
    if (grad_logits.size() != acts_[head].size()) fail(ErrorCode::ShapeMismatch, "logit gradient size");
    if (grads.size() != graph_.size()) grads = ParamStore::zeros_like(graph_);
    grads.zero();
    for (NodeId id = 0; id < graph_.size(); ++id) {
        if (dacts_[id].size() != acts_[id].size()) {
            dacts_[id] = Tensor(acts_[id].dims());
        } else {
            dacts_[id].fill(0.0f);
        }
    }
    std::copy(grad_logits.data().begin(), grad_logits.data().end(), dacts_[head].data().begin());
    for (NodeId id = head + 1; id-- > 1;) backward_node(id, params, grads);
}

void Executor::backward_node(NodeId id, const ParamStore& params, ParamStore& grads) {
    const Node& node = graph_.node(id);
    const LayerParams& p = params[id];
    LayerParams& g = grads[id];
    const Tensor& dy = dacts_[id];
    const Shape out = batch_shape(id);
    const NodeId src = node.inputs.empty() ? 0 : node.inputs.front();
    const Tensor& x = acts_[src];
    Tensor& dx = dacts_[src];
    const Shape in = batch_shape(src);

    switch (node.kind) {
        case LayerKind::Input:
        case LayerKind::SoftmaxXEnt: break;
        case LayerKind::Conv:
            ops::conv_backward<float>(cspan(x), in, cspan(p.weight), node.units, node.geometry, 0.0f, cspan(dy),
                                      src == graph_.input() && !input_grad_ ? std::span<float>() : dx.data(),
                                      g.weight.data(), g.bias.data());
            break;
        case LayerKind::Dense:
            ops::dense_backward<float>(cspan(x), batch_, node.fan_in_units, cspan(p.weight), node.units, cspan(dy),
                                       dx.data(), g.weight.data(), g.bias.data());
            break;
        case LayerKind::BinaryConv:
        case LayerKind::BinaryDense: {
            const BinaryCache& bc = binary_[id];
            Tensor dy_eff = dy;
            apply_scales(node, bc.alpha, bc.k_map, out, dy_eff.data().data());
            std::vector<float> dxb(x.size(), 0.0f);
            std::vector<float> dwb(p.weight.size(), 0.0f);
            if (node.kind == LayerKind::BinaryConv) {
                ops::conv_backward<float>(bc.xb, in, bc.wb, node.units, node.geometry, 1.0f, cspan(dy_eff), dxb, dwb,
                                          {});
            } else {
                ops::dense_backward<float>(bc.xb, batch_, node.fan_in_units, bc.wb, node.units, cspan(dy_eff), dxb,
                                           dwb, {});
            }
            const BinarizeConfig& cfg = node.binary.binarize;
            auto xs = x.data();
            auto dxs = dx.data();
            for (std::size_t i = 0; i < dxb.size(); ++i) dxs[i] += dxb[i] * ste_factor(xs[i], cfg);
            auto ws = p.weight.data();
            auto dws = g.weight.data();
            const std::size_t k = p.weight.cols();
            const bool backward_scale = node.binary.scale_backward_only && !bc.alpha.empty();
            for (std::size_t i = 0; i < dwb.size(); ++i) {
                float v = dwb[i] * ste_factor(ws[i], cfg);
                if (backward_scale) v *= bc.alpha.size() == 1 ? bc.alpha[0] : bc.alpha[i / k];
                dws[i] += v;
            }
            break;
        }
        case LayerKind::BatchNorm: {
            const NormCache& nc = norm_[id];
            if (nc.batch_stats) {
                ops::batchnorm_backward<float>(cspan(x), in, cspan(p.gamma), nc.mean, nc.invstd, cspan(dy), dx.data(),
                                               g.gamma.data(), g.beta.data());
            } else {
                // Eval mode is a fixed per-channel affine map.
                auto xs = x.data();
                auto dys = dy.data();
                auto dxs = dx.data();
                for (std::size_t n = 0; n < in.n; ++n) {
                    for (std::size_t c = 0; c < in.c; ++c) {
                        const float s = nc.invstd[c];
                        const float inv = 1.0f / std::sqrt(p.running_var[c] + node.batch_norm.epsilon);
                        for (std::size_t q = 0; q < in.plane(); ++q) {
                            const std::size_t i = (n * in.c + c) * in.plane() + q;
                            dxs[i] += dys[i] * s;
                            g.gamma[c] += dys[i] * (xs[i] - p.running_mean[c]) * inv;
                            g.beta[c] += dys[i];
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::MaxPool: ops::max_pool_backward<float>(cspan(dy), argmax_[id], dx.data()); break;
        case LayerKind::AvgPool: ops::avg_pool_backward<float>(cspan(dy), in, node.geometry, dx.data()); break;
        case LayerKind::GlobalAvgPool: ops::global_avg_pool_backward<float>(cspan(dy), in, dx.data()); break;
        case LayerKind::ReLU: {
            auto xs = x.data();
            auto dys = dy.data();
            auto dxs = dx.data();
            for (std::size_t i = 0; i < xs.size(); ++i) {
                if (xs[i] > 0.0f) dxs[i] += dys[i];
            }
            break;
        }
        case LayerKind::SignAct: {
            auto xs = x.data();
            auto dys = dy.data();
            auto dxs = dx.data();
            for (std::size_t i = 0; i < xs.size(); ++i) dxs[i] += dys[i] * ste_factor(xs[i], node.binary.binarize);
            break;
        }
        case LayerKind::Add: {
            auto dys = dy.data();
            for (NodeId part : node.inputs) {
                auto d = dacts_[part].data();
                for (std::size_t i = 0; i < dys.size(); ++i) d[i] += dys[i];
            }
            break;
        }
        case LayerKind::Concat: {
            std::size_t offset = 0;
            for (NodeId part : node.inputs) {
                const Shape ps = batch_shape(part);
                float* d = dacts_[part].data().data();
                const float* s = dy.data().data();
                for (std::size_t n = 0; n < batch_; ++n) {
                    const float* from = s + n * out.per_sample() + offset;
                    float* to = d + n * ps.per_sample();
                    for (std::size_t i = 0; i < ps.per_sample(); ++i) to[i] += from[i];
                }
                offset += ps.per_sample();
            }
            break;
        }
        case LayerKind::Flatten: {
            auto dys = dy.data();
            auto dxs = dx.data();
            for (std::size_t i = 0; i < dys.size(); ++i) dxs[i] += dys[i];
            break;
        }
    }
}

}  // namespace bitgrad::nn
