#include "bitgrad/modelio.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "bitgrad/binarize.hpp"
#include "bitgrad/error.hpp"
#include "bitgrad/nn/ops.hpp"

namespace bitgrad::modelio {

namespace {

constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

// Little-endian writer; every multi-byte field goes through put_u*.
class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    void floats(std::span<const float> v) {
        u64(v.size());
        for (float x : v) f32(x);
    }
    void tensor(const Tensor& t) {
        u8(static_cast<std::uint8_t>(t.rank()));
        for (std::size_t d : t.dims()) u64(d);
        for (float x : t.data()) f32(x);
    }

    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) {
            fail(ErrorCode::Truncated, "need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                                           ", " + std::to_string(in_.size() - pos_) + " left");
        }
    }
    void bytes(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, in_.data() + pos_, n);
        pos_ += n;
    }
    std::uint8_t u8() {
        need(1);
        return in_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{in_[pos_++]} << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{in_[pos_++]} << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    // Counts are checked against the bytes left before anything is allocated.
    std::size_t count(std::size_t elem_bytes) {
        const std::uint64_t n = u64();
        if (elem_bytes != 0 && n > (in_.size() - pos_) / elem_bytes) {
            fail(ErrorCode::Truncated, "length " + std::to_string(n) + " runs past the end of the data");
        }
        return static_cast<std::size_t>(n);
    }
    std::string str() {
        const std::size_t n = count(1);
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    std::vector<float> floats() {
        std::vector<float> v(count(4));
        for (float& x : v) x = f32();
        return v;
    }
    Tensor tensor() {
        const std::size_t rank = u8();
        if (rank == 0) return {};
        std::vector<std::size_t> dims(rank);
        std::size_t total = 1;
        for (auto& d : dims) {
            d = count(0);
            if (d != 0 && total > (in_.size() - pos_) / d) fail(ErrorCode::Truncated, "tensor runs past the end");
            total *= d;
        }
        need(total * 4);
        std::vector<float> data(total);
        for (float& x : data) x = f32();
        return Tensor(std::move(dims), std::move(data));
    }
    void magic(const char (&want)[8], const char* what) {
        char got[8];
        need(8);
        bytes(got, 8);
        if (std::memcmp(got, want, 8) != 0) fail(ErrorCode::BadMagic, std::string("not a ") + what);
    }
    bool done() const noexcept { return pos_ == in_.size(); }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

void put_store(Writer& w, const nn::ParamStore& store) {
    w.u64(store.size());
    for (nn::NodeId id = 0; id < store.size(); ++id) {
        const nn::LayerParams& p = store[id];
        for (const Tensor* t : {&p.weight, &p.bias, &p.gamma, &p.beta, &p.running_mean, &p.running_var}) w.tensor(*t);
    }
}

// Reads a store and checks each slot against the layout `like` expects.
nn::ParamStore get_store(Reader& r, const nn::ParamStore& like) {
    const std::size_t n = r.count(6);
    if (n != like.size()) {
        fail(ErrorCode::ShapeMismatch, "stored " + std::to_string(n) + " layers, architecture has " +
                                           std::to_string(like.size()));
    }
    nn::ParamStore store = like;
    for (nn::NodeId id = 0; id < n; ++id) {
        nn::LayerParams& p = store[id];
        for (Tensor* t : {&p.weight, &p.bias, &p.gamma, &p.beta, &p.running_mean, &p.running_var}) {
            Tensor v = r.tensor();
            if (v.dims() != t->dims()) {
                fail(ErrorCode::ShapeMismatch, "stored tensor of layer " + std::to_string(id) + " has the wrong shape");
            }
            *t = std::move(v);
        }
    }
    return store;
}

void check_version(std::uint32_t got, std::uint32_t want, const char* what) {
    if (got != want) {
        fail(ErrorCode::VersionMismatch, std::string(what) + " version " + std::to_string(got) + ", expected " +
                                             std::to_string(want));
    }
}

}  // namespace

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::MissingFile, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::Io, "short write to " + path.string());
}

bool is_packed_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    char head[8] = {};
    if (!in.read(head, 8)) return false;
    return std::memcmp(head, kPackedMagic, 8) == 0;
}

// ---------------------------------------------------------------- checkpoint

Checkpoint make_checkpoint(const arch::ArchSpec& spec, const train::TrainState& state, bool with_optimizer) {
    Checkpoint c;
    c.spec = spec;
    c.params = state.params;
    if (with_optimizer) c.adam = state.adam;
    std::ostringstream rng;
    rng << state.rng;
    c.rng_state = rng.str();
    c.epoch = state.epoch;
    return c;
}

train::TrainState restore(const Checkpoint& ckpt) {
    const nn::Graph graph = arch::build_network(ckpt.spec);
    train::TrainState s;
    s.params = ckpt.params;
    s.adam = ckpt.adam ? *ckpt.adam : train::AdamState(graph);
    s.epoch = ckpt.epoch;
    std::istringstream rng(ckpt.rng_state);
    rng >> s.rng;
    if (!rng) fail(ErrorCode::InvalidConfig, "unreadable RNG state in checkpoint");
    return s;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.bytes(kCheckpointMagic, 8);
    w.u32(ckpt.version);
    w.str(arch::format_arch(ckpt.spec));
    w.u64(ckpt.epoch);
    w.str(ckpt.rng_state);
    put_store(w, ckpt.params);
    w.u8(ckpt.adam ? 1 : 0);
    if (ckpt.adam) {
        const train::AdamState& a = *ckpt.adam;
        w.f64(a.cfg.beta1);
        w.f64(a.cfg.beta2);
        w.f64(a.cfg.eps);
        w.f64(a.cfg.weight_decay);
        w.u64(a.step);
        put_store(w, a.m);
        put_store(w, a.v);
    }
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    r.magic(kCheckpointMagic, "checkpoint");
    Checkpoint c;
    c.version = r.u32();
    check_version(c.version, kCheckpointVersion, "checkpoint");
    c.spec = arch::parse_arch(r.str());
    c.epoch = r.u64();
    c.rng_state = r.str();
    const nn::Graph graph = arch::build_network(c.spec);
    c.params = get_store(r, nn::ParamStore(graph));
    if (r.u8() != 0) {
        train::AdamState a;
        a.cfg.beta1 = r.f64();
        a.cfg.beta2 = r.f64();
        a.cfg.eps = r.f64();
        a.cfg.weight_decay = r.f64();
        a.step = r.u64();
        const nn::ParamStore like = nn::ParamStore::zeros_like(graph);
        a.m = get_store(r, like);
        a.v = get_store(r, like);
        c.adam = std::move(a);
    }
    if (!r.done()) fail(ErrorCode::InvalidConfig, "trailing bytes after checkpoint");
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_bytes(path)); }

// -------------------------------------------------------------------- packed

PackedModel::PackedModel(arch::ArchSpec spec, OffsetMode mode, std::vector<PackedLayer> layers)
    : spec_(std::move(spec)), graph_(arch::build_network(spec_)), mode_(mode), layers_(std::move(layers)) {
    index_.assign(graph_.size(), npos);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const PackedLayer& l = layers_[i];
        if (l.node >= graph_.size() || graph_.node(l.node).kind != l.kind || index_[l.node] != npos) {
            fail(ErrorCode::ShapeMismatch, "packed layer " + std::to_string(i) + " does not match the architecture");
        }
        index_[l.node] = i;
    }
    for (nn::NodeId id = 0; id < graph_.size(); ++id) {
        const nn::Node& n = graph_.node(id);
        const bool needs = n.has_weights() || n.kind == nn::LayerKind::BatchNorm;
        if (needs && index_[id] == npos) fail(ErrorCode::ShapeMismatch, "no packed record for layer " + n.name);
    }
}

const PackedLayer* PackedModel::layer_for(nn::NodeId id) const {
    if (id >= index_.size() || index_[id] == npos) return nullptr;
    return &layers_[index_[id]];
}

PackedModel export_packed(const arch::ArchSpec& spec, const nn::ParamStore& params, OffsetMode mode) {
    const nn::Graph graph = arch::build_network(spec);
    if (params.size() != graph.size()) fail(ErrorCode::ShapeMismatch, "parameters do not match the architecture");
    std::vector<PackedLayer> layers;
    for (nn::NodeId id = 0; id < graph.size(); ++id) {
        const nn::Node& node = graph.node(id);
        const nn::LayerParams& p = params[id];
        PackedLayer l;
        l.node = id;
        l.kind = node.kind;
        l.geometry = node.geometry;
        l.units = node.units;
        switch (node.kind) {
            case nn::LayerKind::BinaryConv:
            case nn::LayerKind::BinaryDense: {
                if (node.binary.scaling == ScalingMode::InputK) {
                    fail(ErrorCode::IncompatibleLayer,
                         node.name + ": the input scale map needs real activations at inference");
                }
                l.offset = mode;
                const std::size_t k = p.weight.cols();
                l.bits = pack_signs_of(p.weight.data(), node.units, k, PadRole::Weight);
                std::vector<float> alpha(node.units, 1.0f);
                if (!node.binary.scale_backward_only &&
                    (node.binary.scaling == ScalingMode::WeightPerChannel ||
                     node.binary.scaling == ScalingMode::WeightScalar)) {
                    const Tensor a = weight_scale(p.weight, node.binary.scaling);
                    for (std::size_t f = 0; f < node.units; ++f) alpha[f] = a.size() == 1 ? a[0] : a[f];
                }
                l.scale.resize(node.units);
                l.shift.resize(node.units);
                for (std::size_t f = 0; f < node.units; ++f) {
                    if (mode == OffsetMode::Explicit) {
                        l.scale[f] = alpha[f];
                        l.shift[f] = 0.0f;
                    } else {
                        // popcount p = (dot + k) / 2, so alpha * dot = 2 alpha p - alpha k.
                        l.scale[f] = 2.0f * alpha[f];
                        l.shift[f] = -static_cast<float>(k) * alpha[f];
                    }
                }
                break;
            }
            case nn::LayerKind::Conv:
            case nn::LayerKind::Dense:
                l.weight.assign(p.weight.data().begin(), p.weight.data().end());
                l.shift.assign(p.bias.data().begin(), p.bias.data().end());
                break;
            case nn::LayerKind::BatchNorm: {
                const std::size_t c = node.out.c;
                l.units = c;
                l.scale.resize(c);
                l.shift.resize(c);
                ops::batchnorm_fold<float>(p.gamma.data(), p.beta.data(), p.running_mean.data(), p.running_var.data(),
                                           node.batch_norm.epsilon, l.scale, l.shift);
                break;
            }
            default: continue;
        }
        layers.push_back(std::move(l));
    }
    return PackedModel(spec, mode, std::move(layers));
}

PackedModel export_packed(const Checkpoint& ckpt, OffsetMode mode) { return export_packed(ckpt.spec, ckpt.params, mode); }

std::vector<std::uint8_t> encode_packed(const PackedModel& model) {
    Writer w;
    w.bytes(kPackedMagic, 8);
    w.u32(kPackedVersion);
    w.u8(static_cast<std::uint8_t>(model.offset_mode()));
    w.str(arch::format_arch(model.spec()));
    w.u64(model.layers().size());
    for (const PackedLayer& l : model.layers()) {
        w.u64(l.node);
        w.u8(static_cast<std::uint8_t>(l.kind));
        w.u32(static_cast<std::uint32_t>(l.geometry.kh));
        w.u32(static_cast<std::uint32_t>(l.geometry.kw));
        w.u32(static_cast<std::uint32_t>(l.geometry.stride));
        w.u32(static_cast<std::uint32_t>(l.geometry.pad));
        w.u64(l.units);
        w.u8(static_cast<std::uint8_t>(l.offset));
        w.u64(l.bits.rows());
        w.u64(l.bits.cols());
        for (std::uint64_t word : l.bits.words()) w.u64(word);
        w.floats(l.weight);
        w.floats(l.scale);
        w.floats(l.shift);
    }
    return w.take();
}

PackedModel decode_packed(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    r.magic(kPackedMagic, "packed model");
    check_version(r.u32(), kPackedVersion, "packed model");
    const std::uint8_t mode = r.u8();
    if (mode > 1) fail(ErrorCode::InvalidConfig, "unknown offset mode");
    arch::ArchSpec spec = arch::parse_arch(r.str());
    const std::size_t count = r.count(8);
    std::vector<PackedLayer> layers(count);
    for (PackedLayer& l : layers) {
        l.node = r.u64();
        const std::uint8_t kind = r.u8();
        if (kind > static_cast<std::uint8_t>(nn::LayerKind::SoftmaxXEnt)) fail(ErrorCode::InvalidConfig, "unknown layer kind");
        l.kind = static_cast<nn::LayerKind>(kind);
        l.geometry.kh = r.u32();
        l.geometry.kw = r.u32();
        l.geometry.stride = r.u32();
        l.geometry.pad = r.u32();
        l.units = r.u64();
        const std::uint8_t off = r.u8();
        if (off > 1) fail(ErrorCode::InvalidConfig, "unknown offset mode");
        l.offset = static_cast<OffsetMode>(off);
        const std::size_t rows = r.u64();
        const std::size_t cols = r.u64();
        if (rows != 0 || cols != 0) {
            const std::size_t words = words_for(cols);
            if (rows != 0 && words > 0 && rows > std::numeric_limits<std::size_t>::max() / words / 8) {
                fail(ErrorCode::Truncated, "packed payload size overflows");
            }
            r.need(rows * words * 8);
            std::vector<std::uint64_t> data(rows * words);
            for (auto& word : data) word = r.u64();
            l.bits = BitTensor(rows, cols, PadRole::Weight, std::move(data));
        }
        l.weight = r.floats();
        l.scale = r.floats();
        l.shift = r.floats();
    }
    if (!r.done()) fail(ErrorCode::InvalidConfig, "trailing bytes after packed model");
    PackedModel model(std::move(spec), static_cast<OffsetMode>(mode), std::move(layers));
    // Geometry and payload sizes must agree with the rebuilt graph.
    for (const PackedLayer& l : model.layers()) {
        const nn::Node& n = model.graph().node(l.node);
        if (n.is_binary()) {
            const std::size_t k = n.kind == nn::LayerKind::BinaryConv
                                      ? model.graph().node(n.inputs.front()).out.c * n.geometry.kh * n.geometry.kw
                                      : n.fan_in_units;
            if (l.bits.rows() != n.units || l.bits.cols() != k || l.scale.size() != n.units ||
                l.shift.size() != n.units) {
                fail(ErrorCode::ShapeMismatch, n.name + ": packed payload does not match the layer");
            }
        } else if (n.kind == nn::LayerKind::BatchNorm) {
            if (l.scale.size() != n.out.c || l.shift.size() != n.out.c) {
                fail(ErrorCode::ShapeMismatch, n.name + ": folded normalization size");
            }
        } else {
            const std::size_t in = n.kind == nn::LayerKind::Conv
                                       ? model.graph().node(n.inputs.front()).out.c * n.geometry.kh * n.geometry.kw
                                       : n.fan_in_units;
            if (l.weight.size() != n.units * in || l.shift.size() != (n.bias ? n.units : 0)) {
                fail(ErrorCode::ShapeMismatch, n.name + ": packed weights do not match the layer");
            }
        }
        if (l.geometry != n.geometry) fail(ErrorCode::ShapeMismatch, n.name + ": geometry differs");
    }
    return model;
}

void save_packed(const std::filesystem::path& path, const PackedModel& model) {
    write_bytes(path, encode_packed(model));
}

PackedModel load_packed(const std::filesystem::path& path) { return decode_packed(read_bytes(path)); }

Tensor PackedModel::forward(const Tensor& batch) const {
    using nn::LayerKind;
    const Shape in = batch.shape();
    const Shape want = graph_.input_shape();
    if (in.c != want.c || in.h != want.h || in.w != want.w || in.n == 0) {
        fail(ErrorCode::ShapeMismatch, "batch " + to_string(in) + " does not match input " + to_string(want));
    }
    const std::size_t n = in.n;
    auto shape_of = [&](nn::NodeId id) {
        Shape s = graph_.node(id).out;
        s.n = n;
        return s;
    };
    std::vector<Tensor> acts(graph_.size());
    acts[0] = batch.reshaped({n, in.c, in.h, in.w});
    // Activations are dropped once their last consumer has run.
    const auto consumers = graph_.consumers();
    std::vector<std::size_t> last_use(graph_.size(), 0);
    for (nn::NodeId id = 0; id < graph_.size(); ++id) {
        for (nn::NodeId c : consumers[id]) last_use[id] = std::max(last_use[id], c);
    }
    const nn::NodeId head = graph_.logits();

    for (nn::NodeId id = 1; id <= head; ++id) {
        const nn::Node& node = graph_.node(id);
        const Shape out = shape_of(id);
        const nn::NodeId src = node.inputs.front();
        const Shape xs = shape_of(src);
        const Tensor& x = acts[src];
        Tensor y(std::vector<std::size_t>{n, out.c, out.h, out.w});
        const PackedLayer* l = layer_for(id);
        switch (node.kind) {
            case LayerKind::Conv:
                ops::conv_forward<float>(x.data(), xs, l->weight, l->shift, node.units, node.geometry, 0.0f, y.data());
                break;
            case LayerKind::Dense:
                ops::dense_forward<float>(x.data(), n, node.fan_in_units, l->weight, l->shift, node.units, y.data());
                break;
            case LayerKind::BinaryConv:
            case LayerKind::BinaryDense: {
                if (node.kind == LayerKind::BinaryConv) {
                    binary_conv_signs(x, l->bits, node.geometry, l->offset, y.data());
                } else {
                    const BitTensor a = pack_signs_of(x.data(), n, node.fan_in_units, PadRole::Input);
                    std::vector<float> tmp(n * node.units);
                    xnor_gemm(a, l->bits, l->offset, node.fan_in_units, tmp);
                    std::copy(tmp.begin(), tmp.end(), y.data().begin());
                }
                Shape ys = out;
                ops::affine_channels<float>(y.data(), ys, l->scale, l->shift, y.data());
                break;
            }
            case LayerKind::BatchNorm:
                ops::affine_channels<float>(x.data(), xs, l->scale, l->shift, y.data());
                break;
            case LayerKind::MaxPool:
                ops::max_pool_forward<float>(x.data(), xs, node.geometry, y.data(), {});
                break;
            case LayerKind::AvgPool: ops::avg_pool_forward<float>(x.data(), xs, node.geometry, y.data()); break;
            case LayerKind::GlobalAvgPool: ops::global_avg_pool_forward<float>(x.data(), xs, y.data()); break;
            case LayerKind::ReLU: {
                auto s = x.data();
                auto d = y.data();
                for (std::size_t i = 0; i < s.size(); ++i) d[i] = s[i] > 0.0f ? s[i] : 0.0f;
                break;
            }
            case LayerKind::SignAct: {
                auto s = x.data();
                auto d = y.data();
                for (std::size_t i = 0; i < s.size(); ++i) d[i] = sign_value(s[i]);
                break;
            }
            case LayerKind::Add: {
                auto d = y.data();
                for (nn::NodeId part : node.inputs) {
                    auto s = acts[part].data();
                    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
                }
                break;
            }
            case LayerKind::Concat: {
                std::size_t offset = 0;
                for (nn::NodeId part : node.inputs) {
                    const std::size_t per = shape_of(part).per_sample();
                    const float* s = acts[part].data().data();
                    for (std::size_t b = 0; b < n; ++b) {
                        std::copy_n(s + b * per, per, y.data().data() + b * out.per_sample() + offset);
                    }
                    offset += per;
                }
                break;
            }
            case LayerKind::Flatten: std::copy(x.data().begin(), x.data().end(), y.data().begin()); break;
            case LayerKind::Input:
            case LayerKind::SoftmaxXEnt: break;
        }
        acts[id] = std::move(y);
        for (nn::NodeId part : node.inputs) {
            if (last_use[part] <= id && part != head) acts[part] = Tensor();
        }
    }
    return acts[head].reshaped({n, graph_.classes()});
}

}  // namespace bitgrad::modelio
