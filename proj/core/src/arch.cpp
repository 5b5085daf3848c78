#include "bitgrad/arch.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bitgrad/error.hpp"

namespace bitgrad::arch {

using nn::Graph;
using nn::LayerKind;
using nn::NodeId;

std::string_view to_string(Family f) noexcept {
    switch (f) {
        case Family::LeNet: return "lenet";
        case Family::ResNetE18: return "resnete18";
        case Family::ResNetE34: return "resnete34";
        case Family::DenseNetE: return "densenete";
    }
    return "unknown";
}

std::string_view to_string(BlockKind b) noexcept {
    switch (b) {
        case BlockKind::ResNetBottleneck: return "resnet_bottleneck";
        case BlockKind::ResNetPlain: return "resnet_plain";
        case BlockKind::ResNetE: return "resnete";
        case BlockKind::DenseNetBottleneck: return "densenet_bottleneck";
        case BlockKind::DenseNetPlain: return "densenet_plain";
        case BlockKind::DenseNetE: return "densenete";
    }
    return "unknown";
}

std::string_view to_string(DownsamplingMode d) noexcept {
    return d == DownsamplingMode::BinaryLowReduction ? "binary" : "fp";
}

bool is_resnet(BlockKind b) noexcept {
    return b == BlockKind::ResNetBottleneck || b == BlockKind::ResNetPlain || b == BlockKind::ResNetE;
}

namespace {

std::string_view backward_name(BackwardRule r) { return r == BackwardRule::SteSign ? "ste" : "approxsign"; }

std::string_view scaling_name(ScalingMode m) {
    switch (m) {
        case ScalingMode::None: return "none";
        case ScalingMode::WeightPerChannel: return "weight_channel";
        case ScalingMode::WeightScalar: return "weight_scalar";
        case ScalingMode::InputK: return "input_k";
    }
    return "none";
}

[[noreturn]] void bad(std::string_view key, std::string_view value) {
    fail(ErrorCode::InvalidConfig, "invalid value '" + std::string(value) + "' for key '" + std::string(key) + "'");
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::size_t parse_count(std::string_view key, std::string_view v) {
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) bad(key, v);
    return out;
}

double parse_real(std::string_view key, std::string_view v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(std::string(v), &used);
        if (used != v.size()) bad(key, v);
        return out;
    } catch (const std::logic_error&) {
        bad(key, v);
    }
}

template <class F>
void split_list(std::string_view v, char sep, F&& fn) {
    while (true) {
        const auto pos = v.find(sep);
        fn(trim(v.substr(0, pos)));
        if (pos == std::string_view::npos) break;
        v.remove_prefix(pos + 1);
    }
}

template <class T>
std::string join(const std::vector<T>& xs, char sep) {
    std::ostringstream os;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) os << sep;
        os << xs[i];
    }
    return os.str();
}

}  // namespace

void ArchSpec::validate() const {
    if (classes < 2) fail(ErrorCode::InvalidConfig, "need at least two classes");
    if (input.c == 0 || input.h == 0 || input.w == 0) fail(ErrorCode::InvalidConfig, "empty input shape");
    if (!(clip_threshold > 0.0f)) fail(ErrorCode::InvalidConfig, "clip threshold must be positive");
    for (double r : reduction) {
        if (!(r >= 1.0)) fail(ErrorCode::InvalidConfig, "reduction rates must be >= 1");
    }
    for (std::size_t s : stages) {
        if (s == 0) fail(ErrorCode::InvalidConfig, "empty stage");
    }
    if (stem_channels == 0) fail(ErrorCode::InvalidConfig, "stem needs channels");
    switch (family) {
        case Family::LeNet:
            if (lenet_widths().size() != 3) fail(ErrorCode::InvalidConfig, "LeNet takes three widths");
            for (std::size_t w : lenet_widths()) {
                if (w == 0) fail(ErrorCode::InvalidConfig, "LeNet widths must be positive");
            }
            if (scaling == ScalingMode::InputK) fail(ErrorCode::InvalidConfig, "LeNet does not support input scaling");
            break;
        case Family::ResNetE18:
        case Family::ResNetE34:
            if (!is_resnet(block)) fail(ErrorCode::InvalidConfig, "ResNet family needs a ResNet block kind");
            if (block != BlockKind::ResNetE) {
                for (std::size_t s : stage_split()) {
                    if (s % 2 != 0) {
                        fail(ErrorCode::InvalidConfig, "two-convolution blocks need an even count per stage");
                    }
                }
            }
            break;
        case Family::DenseNetE: {
            if (is_resnet(block)) fail(ErrorCode::InvalidConfig, "DenseNet family needs a DenseNet block kind");
            if (blocks == 0) fail(ErrorCode::InvalidConfig, "DenseNet needs blocks >= 1");
            if (growth_rate == 0) fail(ErrorCode::InvalidConfig, "DenseNet needs a growth rate");
            if (block == BlockKind::DenseNetE && growth_rate % 2 != 0) {
                fail(ErrorCode::InvalidConfig, "DenseNetE splits the growth rate in two; it must be even");
            }
            const auto split = stage_split();
            std::size_t total = 0;
            for (std::size_t s : split) total += s;
            if (total != blocks) fail(ErrorCode::InvalidConfig, "stage counts must sum to blocks");
            break;
        }
    }
    if (family != Family::LeNet) {
        const auto split = stage_split();
        if (split.empty()) fail(ErrorCode::InvalidConfig, "no stages");
        if (reductions().size() + 1 != split.size()) {
            fail(ErrorCode::InvalidConfig, "need one reduction per transition (" + std::to_string(split.size() - 1) + ")");
        }
    }
}

std::vector<std::size_t> ArchSpec::stage_split() const {
    if (!stages.empty()) return stages;
    switch (family) {
        case Family::LeNet: return {};
        case Family::ResNetE18: return {4, 4, 4, 4};
        case Family::ResNetE34: return {6, 8, 12, 6};
        case Family::DenseNetE: {
            // Ratio 3:2:1:2 over four stages; leftovers go to the first stage.
            static constexpr std::size_t ratio[4] = {3, 2, 1, 2};
            std::vector<std::size_t> out(4);
            std::size_t used = 0;
            for (std::size_t i = 0; i < 4; ++i) {
                out[i] = std::max<std::size_t>(1, blocks * ratio[i] / 8);
                used += out[i];
            }
            if (used < blocks) out[0] += blocks - used;
            return out;
        }
    }
    return {};
}

std::vector<double> ArchSpec::reductions() const {
    if (!reduction.empty()) return reduction;
    const auto split = stage_split();
    if (split.size() < 2) return {};
    const std::size_t transitions = split.size() - 1;
    if (family != Family::DenseNetE) return std::vector<double>(transitions, 1.0);
    if (downsampling == DownsamplingMode::FullPrecisionHighReduction) return std::vector<double>(transitions, 2.0);
    std::vector<double> out(transitions, 1.4);
    out.front() = 1.0;
    return out;
}

std::vector<std::size_t> ArchSpec::lenet_widths() const {
    if (!widths.empty()) return widths;
    return {32, 64, 1100};
}

nn::BinarySpec ArchSpec::binary_spec() const {
    nn::BinarySpec spec;
    spec.binarize.backward = backward;
    spec.binarize.clip_threshold = clip_threshold;
    spec.scaling = scaling;
    spec.scale_backward_only = scale_backward_only;
    return spec;
}

ArchSpec parse_arch(std::string_view text) {
    ArchSpec spec;
    bool block_seen = false;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto eol = text.find('\n');
        std::string_view line = text.substr(0, eol);
        text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            fail(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key = lower(trim(line.substr(0, eq)));
        const std::string_view raw = trim(line.substr(eq + 1));
        const std::string value = lower(raw);

        if (key == "family") {
            if (value == "lenet") spec.family = Family::LeNet;
            else if (value == "resnete18" || value == "resnete-18") spec.family = Family::ResNetE18;
            else if (value == "resnete34" || value == "resnete-34") spec.family = Family::ResNetE34;
            else if (value == "densenete" || value == "densenet") spec.family = Family::DenseNetE;
            else bad(key, raw);
        } else if (key == "block") {
            block_seen = true;
            if (value == "resnet_bottleneck") spec.block = BlockKind::ResNetBottleneck;
            else if (value == "resnet_plain") spec.block = BlockKind::ResNetPlain;
            else if (value == "resnete") spec.block = BlockKind::ResNetE;
            else if (value == "densenet_bottleneck") spec.block = BlockKind::DenseNetBottleneck;
            else if (value == "densenet_plain") spec.block = BlockKind::DenseNetPlain;
            else if (value == "densenete") spec.block = BlockKind::DenseNetE;
            else bad(key, raw);
        } else if (key == "blocks") {
            spec.blocks = parse_count(key, value);
        } else if (key == "growth_rate") {
            spec.growth_rate = parse_count(key, value);
        } else if (key == "reduction") {
            spec.reduction.clear();
            split_list(value, ',', [&](std::string_view v) { spec.reduction.push_back(parse_real(key, v)); });
        } else if (key == "downsampling") {
            if (value == "binary" || value == "binary_low") {
                spec.downsampling = DownsamplingMode::BinaryLowReduction;
            } else if (value == "fp" || value == "fp_high" || value == "full_precision") {
                spec.downsampling = DownsamplingMode::FullPrecisionHighReduction;
            } else {
                bad(key, raw);
            }
        } else if (key == "classes") {
            spec.classes = parse_count(key, value);
        } else if (key == "input") {
            if (value == "mnist") spec.input = {1, 1, 28, 28};
            else if (value == "cifar") spec.input = {1, 3, 32, 32};
            else if (value == "imagenet") spec.input = {1, 3, 224, 224};
            else {
                std::vector<std::size_t> dims;
                split_list(value, 'x', [&](std::string_view v) { dims.push_back(parse_count(key, v)); });
                if (dims.size() != 3) bad(key, raw);
                spec.input = {1, dims[0], dims[1], dims[2]};
            }
        } else if (key == "stages") {
            spec.stages.clear();
            split_list(value, ',', [&](std::string_view v) { spec.stages.push_back(parse_count(key, v)); });
        } else if (key == "widths") {
            spec.widths.clear();
            split_list(value, ',', [&](std::string_view v) { spec.widths.push_back(parse_count(key, v)); });
        } else if (key == "stem_channels") {
            spec.stem_channels = parse_count(key, value);
        } else if (key == "backward") {
            if (value == "ste" || value == "sign") spec.backward = BackwardRule::SteSign;
            else if (value == "approxsign") spec.backward = BackwardRule::ApproxSign;
            else bad(key, raw);
        } else if (key == "clip") {
            spec.clip_threshold = static_cast<float>(parse_real(key, value));
        } else if (key == "scaling") {
            if (value == "none") spec.scaling = ScalingMode::None;
            else if (value == "weight_channel") spec.scaling = ScalingMode::WeightPerChannel;
            else if (value == "weight_scalar") spec.scaling = ScalingMode::WeightScalar;
            else if (value == "input_k") spec.scaling = ScalingMode::InputK;
            else bad(key, raw);
        } else if (key == "scale_backward_only") {
            if (value == "true" || value == "1") spec.scale_backward_only = true;
            else if (value == "false" || value == "0") spec.scale_backward_only = false;
            else bad(key, raw);
        } else {
            fail(ErrorCode::InvalidConfig, "unknown key '" + key + "' on line " + std::to_string(line_no));
        }
    }
    if (!block_seen && spec.family == Family::DenseNetE) spec.block = BlockKind::DenseNetE;
    spec.validate();
    return spec;
}

ArchSpec load_arch(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::MissingFile, "cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return parse_arch(os.str());
}

std::string format_arch(const ArchSpec& spec) {
    std::ostringstream os;
    os << "family=" << to_string(spec.family) << '\n';
    os << "block=" << to_string(spec.block) << '\n';
    os << "blocks=" << spec.blocks << '\n';
    os << "growth_rate=" << spec.growth_rate << '\n';
    if (!spec.reduction.empty()) {
        std::ostringstream r;
        r.precision(17);
        for (std::size_t i = 0; i < spec.reduction.size(); ++i) r << (i ? "," : "") << spec.reduction[i];
        os << "reduction=" << r.str() << '\n';
    }
    os << "downsampling=" << to_string(spec.downsampling) << '\n';
    os << "classes=" << spec.classes << '\n';
    os << "input=" << spec.input.c << 'x' << spec.input.h << 'x' << spec.input.w << '\n';
    if (!spec.stages.empty()) os << "stages=" << join(spec.stages, ',') << '\n';
    if (!spec.widths.empty()) os << "widths=" << join(spec.widths, ',') << '\n';
    os << "stem_channels=" << spec.stem_channels << '\n';
    os << "backward=" << backward_name(spec.backward) << '\n';
    {
        std::ostringstream c;
        c.precision(9);
        c << spec.clip_threshold;
        os << "clip=" << c.str() << '\n';
    }
    os << "scaling=" << scaling_name(spec.scaling) << '\n';
    os << "scale_backward_only=" << (spec.scale_backward_only ? "true" : "false") << '\n';
    return os.str();
}

namespace {

ConvGeometry geom(std::size_t k, std::size_t stride, std::size_t pad) { return ConvGeometry{k, k, stride, pad}; }

std::string sub(const std::string& prefix, std::string_view leaf) { return prefix + "." + std::string(leaf); }

// BN -> sign -> binary conv (sign lives inside the binary conv node).
NodeId binary_unit(Graph& g, NodeId x, std::size_t filters, ConvGeometry k, const nn::BinarySpec& spec,
                   const std::string& name) {
    const NodeId bn = g.batch_norm(x, {}, sub(name, "bn"));
    return g.binary_conv(bn, filters, k, spec, sub(name, "conv"));
}

NodeId resnet_shortcut(Graph& g, NodeId x, std::size_t out, std::size_t stride, const BlockOptions& opt) {
    const std::string name = sub(opt.name, "shortcut");
    NodeId s = x;
    if (stride > 1) s = g.avg_pool(s, geom(stride, stride, 0), sub(name, "pool"));
    if (opt.downsampling == DownsamplingMode::BinaryLowReduction) {
        return binary_unit(g, s, out, geom(1, 1, 0), opt.binary, name);
    }
    const NodeId conv = g.conv(s, out, geom(1, 1, 0), false, sub(name, "conv"));
    return g.batch_norm(conv, {}, sub(name, "bn"));
}

NodeId dense_unit(Graph& g, NodeId x, std::size_t growth, const nn::BinarySpec& spec, const std::string& name) {
    const NodeId y = binary_unit(g, x, growth, geom(3, 1, 1), spec, name);
    return g.concat({x, y}, sub(name, "concat"));
}

}  // namespace

NodeId build_block(Graph& g, BlockKind kind, NodeId x, const BlockOptions& opt) {
    const std::size_t in = g.node(x).out.c;
    if (opt.channels == 0 || opt.stride == 0) fail(ErrorCode::InvalidConfig, "block needs channels and stride");
    const std::string name = opt.name.empty() ? "block" + std::to_string(g.size()) : opt.name;
    BlockOptions o = opt;
    o.name = name;
    switch (kind) {
        case BlockKind::ResNetE: {
            const NodeId y = binary_unit(g, x, opt.channels, geom(3, opt.stride, 1), opt.binary, name);
            const bool project = opt.stride > 1 || opt.channels != in;
            const NodeId s = project ? resnet_shortcut(g, x, opt.channels, opt.stride, o) : x;
            return g.add(y, s, sub(name, "add"));
        }
        case BlockKind::ResNetPlain: {
            NodeId y = binary_unit(g, x, opt.channels, geom(3, opt.stride, 1), opt.binary, sub(name, "a"));
            y = binary_unit(g, y, opt.channels, geom(3, 1, 1), opt.binary, sub(name, "b"));
            const bool project = opt.stride > 1 || opt.channels != in;
            const NodeId s = project ? resnet_shortcut(g, x, opt.channels, opt.stride, o) : x;
            return g.add(y, s, sub(name, "add"));
        }
        case BlockKind::ResNetBottleneck: {
            const std::size_t mid = std::max<std::size_t>(1, opt.channels / 4);
            NodeId y = binary_unit(g, x, mid, geom(1, 1, 0), opt.binary, sub(name, "reduce"));
            y = binary_unit(g, y, mid, geom(3, opt.stride, 1), opt.binary, sub(name, "mid"));
            y = binary_unit(g, y, opt.channels, geom(1, 1, 0), opt.binary, sub(name, "expand"));
            const bool project = opt.stride > 1 || opt.channels != in;
            const NodeId s = project ? resnet_shortcut(g, x, opt.channels, opt.stride, o) : x;
            return g.add(y, s, sub(name, "add"));
        }
        case BlockKind::DenseNetPlain: return dense_unit(g, x, opt.channels, opt.binary, name);
        case BlockKind::DenseNetE: {
            if (opt.channels % 2 != 0) fail(ErrorCode::InvalidConfig, "DenseNetE needs an even growth rate");
            const NodeId y = dense_unit(g, x, opt.channels / 2, opt.binary, sub(name, "a"));
            return dense_unit(g, y, opt.channels / 2, opt.binary, sub(name, "b"));
        }
        case BlockKind::DenseNetBottleneck: {
            NodeId y = binary_unit(g, x, 4 * opt.channels, geom(1, 1, 0), opt.binary, sub(name, "reduce"));
            y = binary_unit(g, y, opt.channels, geom(3, 1, 1), opt.binary, name);
            return g.concat({x, y}, sub(name, "concat"));
        }
    }
    fail(ErrorCode::InvalidConfig, "unknown block kind");
}

namespace {

NodeId stem(Graph& g, const ArchSpec& spec) {
    NodeId x = g.input();
    if (spec.large_input()) {
        x = g.conv(x, spec.stem_channels, geom(7, 2, 3), true, "stem.conv");
        x = g.batch_norm(x, {}, "stem.bn");
        x = g.relu(x, "stem.relu");
        return g.max_pool(x, geom(3, 2, 1), "stem.pool");
    }
    x = g.conv(x, spec.stem_channels, geom(3, 1, 1), true, "stem.conv");
    x = g.batch_norm(x, {}, "stem.bn");
    return g.relu(x, "stem.relu");
}

void head(Graph& g, NodeId x, std::size_t classes) {
    x = g.batch_norm(x, {}, "head.bn");
    x = g.relu(x, "head.relu");
    x = g.global_avg_pool(x, "head.pool");
    x = g.dense(x, classes, true, "head.fc");
    g.softmax_xent(x);
}

Graph build_resnet(const ArchSpec& spec) {
    Graph g({1, spec.input.c, spec.input.h, spec.input.w});
    NodeId x = stem(g, spec);
    const auto split = spec.stage_split();
    const nn::BinarySpec bin = spec.binary_spec();
    std::size_t width = spec.stem_channels;
    for (std::size_t s = 0; s < split.size(); ++s) {
        if (s > 0) width *= 2;
        const std::size_t per_block = spec.block == BlockKind::ResNetE ? 1 : 2;
        for (std::size_t b = 0; b < split[s] / per_block; ++b) {
            BlockOptions opt;
            opt.channels = width;
            opt.stride = (s > 0 && b == 0) ? 2 : 1;
            opt.downsampling = spec.downsampling;
            opt.binary = bin;
            opt.name = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
            x = build_block(g, spec.block, x, opt);
        }
    }
    head(g, x, spec.classes);
    return g;
}

Graph build_densenet(const ArchSpec& spec) {
    Graph g({1, spec.input.c, spec.input.h, spec.input.w});
    NodeId x = stem(g, spec);
    const auto split = spec.stage_split();
    const auto red = spec.reductions();
    const nn::BinarySpec bin = spec.binary_spec();
    for (std::size_t s = 0; s < split.size(); ++s) {
        for (std::size_t b = 0; b < split[s]; ++b) {
            const std::string name = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
            switch (spec.block) {
                case BlockKind::DenseNetE:
                    // Each binary convolution appends k/2 channels; pairs form the split block.
                    x = dense_unit(g, x, spec.growth_rate / 2, bin, name);
                    break;
                case BlockKind::DenseNetPlain: x = dense_unit(g, x, spec.growth_rate, bin, name); break;
                default: {
                    BlockOptions opt;
                    opt.channels = spec.growth_rate;
                    opt.binary = bin;
                    opt.name = name;
                    x = build_block(g, spec.block, x, opt);
                }
            }
        }
        if (s + 1 == split.size()) break;
        const std::string name = "transition" + std::to_string(s + 1);
        const std::size_t c = g.node(x).out.c;
        const auto out = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(c) / red[s])));
        const NodeId bn = g.batch_norm(x, {}, sub(name, "bn"));
        const NodeId conv = spec.downsampling == DownsamplingMode::BinaryLowReduction
                                ? g.binary_conv(bn, out, geom(1, 1, 0), bin, sub(name, "conv"))
                                : g.conv(bn, out, geom(1, 1, 0), false, sub(name, "conv"));
        x = g.avg_pool(conv, geom(2, 2, 0), sub(name, "pool"));
    }
    head(g, x, spec.classes);
    return g;
}

Graph build_lenet(const ArchSpec& spec) {
    const auto w = spec.lenet_widths();
    const nn::BinarySpec bin = spec.binary_spec();
    Graph g({1, spec.input.c, spec.input.h, spec.input.w});
    NodeId x = g.conv(g.input(), w[0], geom(5, 1, 0), true, "conv1");
    x = g.max_pool(x, geom(2, 2, 0), "pool1");
    x = g.batch_norm(x, {}, "bn1");
    x = g.binary_conv(x, w[1], geom(5, 1, 0), bin, "conv2");
    x = g.max_pool(x, geom(2, 2, 0), "pool2");
    x = g.batch_norm(x, {}, "bn2");
    x = g.flatten(x, "flatten");
    x = g.binary_dense(x, w[2], bin, "fc1");
    x = g.batch_norm(x, {}, "bn3");
    x = g.relu(x, "relu3");
    x = g.dense(x, spec.classes, true, "fc2");
    g.softmax_xent(x);
    return g;
}

}  // namespace

Graph build_network(const ArchSpec& spec) {
    spec.validate();
    switch (spec.family) {
        case Family::LeNet: return build_lenet(spec);
        case Family::ResNetE18:
        case Family::ResNetE34: return build_resnet(spec);
        case Family::DenseNetE: return build_densenet(spec);
    }
    fail(ErrorCode::InvalidConfig, "unknown family");
}

Graph lenet_binary(std::size_t classes, std::vector<std::size_t> widths) {
    ArchSpec spec;
    spec.family = Family::LeNet;
    spec.classes = classes;
    spec.widths = std::move(widths);
    return build_network(spec);
}

SizeReport size_report(const Graph& graph) {
    SizeReport report;
    for (const auto& node : graph.nodes()) {
        LayerSize row;
        row.name = node.name;
        row.kind = node.kind;
        switch (node.kind) {
            case LayerKind::Conv:
            case LayerKind::Dense: {
                const std::size_t taps =
                    node.kind == LayerKind::Conv ? node.geometry.kh * node.geometry.kw : std::size_t{1};
                row.fp_params = node.units * node.fan_in_units * taps + (node.bias ? node.units : 0);
                break;
            }
            case LayerKind::BinaryConv:
            case LayerKind::BinaryDense: {
                const std::size_t taps =
                    node.kind == LayerKind::BinaryConv ? node.geometry.kh * node.geometry.kw : std::size_t{1};
                row.binary_params = node.units * node.fan_in_units * taps;
                break;
            }
            case LayerKind::BatchNorm: row.fp_params = 2 * node.units; break;
            default: continue;
        }
        row.bytes = (row.binary_params + 7) / 8 + row.fp_params * 4;
        report.binary_param_count += row.binary_params;
        report.fp_param_count += row.fp_params;
        report.size_bytes += row.bytes;
        report.breakdown.push_back(std::move(row));
    }
    return report;
}

SizeReport size_report(const ArchSpec& spec) { return size_report(build_network(spec)); }

std::size_t depth(const Graph& graph) {
    std::size_t n = 0;
    for (const auto& node : graph.nodes()) {
        const bool weighted = node.kind == LayerKind::Conv || node.kind == LayerKind::BinaryConv ||
                              node.kind == LayerKind::Dense || node.kind == LayerKind::BinaryDense;
        if (weighted && node.name.find(".shortcut") == std::string::npos) ++n;
    }
    return n;
}

std::size_t shortcut_count(const Graph& graph) {
    return static_cast<std::size_t>(std::count_if(graph.nodes().begin(), graph.nodes().end(), [](const nn::Node& n) {
        return n.kind == LayerKind::Add || n.kind == LayerKind::Concat;
    }));
}

}  // namespace bitgrad::arch
