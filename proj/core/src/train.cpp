#include "bitgrad/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "bitgrad/error.hpp"

namespace bitgrad::train {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

[[noreturn]] void bad(std::string_view key, std::string_view value) {
    fail(ErrorCode::InvalidConfig, "invalid value '" + std::string(value) + "' for key '" + std::string(key) + "'");
}

std::uint64_t to_count(std::string_view key, std::string_view v) {
    try {
        std::size_t used = 0;
        const unsigned long long out = std::stoull(std::string(v), &used);
        if (used != v.size()) bad(key, v);
        return out;
    } catch (const std::logic_error&) {
        bad(key, v);
    }
}

double to_real(std::string_view key, std::string_view v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(std::string(v), &used);
        if (used != v.size()) bad(key, v);
        return out;
    } catch (const std::logic_error&) {
        bad(key, v);
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lr_initial > 0.0)) fail(ErrorCode::InvalidConfig, "lr_initial must be positive");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0)) fail(ErrorCode::InvalidConfig, "decay factor must be in (0,1)");
    for (std::size_t i = 1; i < lr_decay_epochs.size(); ++i) {
        if (lr_decay_epochs[i] <= lr_decay_epochs[i - 1]) {
            fail(ErrorCode::InvalidConfig, "decay epochs must be strictly increasing");
        }
    }
    if (batch_size == 0) fail(ErrorCode::InvalidConfig, "batch size must be positive");
    if (weight_decay != 0.0) fail(ErrorCode::InvalidConfig, "weight decay is not supported; it must be 0");
}

TrainConfig parse_train_config(std::string_view text) {
    TrainConfig cfg;
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
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        if (key == "lr") cfg.lr_initial = to_real(key, value);
        else if (key == "lr_decay_factor") cfg.lr_decay_factor = to_real(key, value);
        else if (key == "lr_decay_epochs") {
            cfg.lr_decay_epochs.clear();
            std::string_view rest = value;
            while (!rest.empty()) {
                const auto comma = rest.find(',');
                const auto item = trim(rest.substr(0, comma));
                if (!item.empty()) cfg.lr_decay_epochs.push_back(to_count(key, item));
                rest.remove_prefix(comma == std::string_view::npos ? rest.size() : comma + 1);
            }
        } else if (key == "epochs") cfg.epochs = to_count(key, value);
        else if (key == "batch_size") cfg.batch_size = to_count(key, value);
        else if (key == "seed") cfg.seed = to_count(key, value);
        else if (key == "weight_decay") cfg.weight_decay = to_real(key, value);
        else if (key == "augment_pad") cfg.augment.pad = to_count(key, value);
        else if (key == "augment_crop") cfg.augment.crop = to_count(key, value);
        else if (key == "augment_hflip") {
            if (value == "true" || value == "1") cfg.augment.hflip = true;
            else if (value == "false" || value == "0") cfg.augment.hflip = false;
            else bad(key, value);
        } else if (key == "train_limit") cfg.train_limit = to_count(key, value);
        else fail(ErrorCode::InvalidConfig, "unknown key '" + key + "' on line " + std::to_string(line_no));
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::MissingFile, "cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return parse_train_config(os.str());
}

std::string format_train_config(const TrainConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "lr=" << cfg.lr_initial << '\n';
    os << "lr_decay_epochs=";
    for (std::size_t i = 0; i < cfg.lr_decay_epochs.size(); ++i) os << (i ? "," : "") << cfg.lr_decay_epochs[i];
    os << '\n';
    os << "lr_decay_factor=" << cfg.lr_decay_factor << '\n';
    os << "epochs=" << cfg.epochs << '\n';
    os << "batch_size=" << cfg.batch_size << '\n';
    os << "seed=" << cfg.seed << '\n';
    os << "weight_decay=" << cfg.weight_decay << '\n';
    os << "augment_pad=" << cfg.augment.pad << '\n';
    os << "augment_crop=" << cfg.augment.crop << '\n';
    os << "augment_hflip=" << (cfg.augment.hflip ? "true" : "false") << '\n';
    os << "train_limit=" << cfg.train_limit << '\n';
    return os.str();
}

TrainConfig mnist_defaults() { return TrainConfig{}; }

TrainConfig cifar10_defaults() {
    TrainConfig cfg;
    cfg.lr_initial = 1e-2;
    cfg.lr_decay_epochs = {80, 100};
    cfg.epochs = 120;
    cfg.batch_size = 128;
    cfg.augment = {4, 32, true};
    return cfg;
}

TrainConfig cifar10_smoke() {
    TrainConfig cfg = cifar10_defaults();
    cfg.epochs = 15;
    cfg.lr_decay_epochs = {10, 13};
    return cfg;
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
    const auto decays = std::count_if(cfg.lr_decay_epochs.begin(), cfg.lr_decay_epochs.end(),
                                      [&](std::size_t e) { return e <= epoch; });
    return cfg.lr_initial * std::pow(cfg.lr_decay_factor, static_cast<double>(decays));
}

Fan fan_of(const nn::Node& node) {
    switch (node.kind) {
        case nn::LayerKind::Conv:
        case nn::LayerKind::BinaryConv: {
            const std::size_t taps = node.geometry.kh * node.geometry.kw;
            return {node.fan_in_units * taps, node.units * taps};
        }
        case nn::LayerKind::Dense:
        case nn::LayerKind::BinaryDense: return {node.fan_in_units, node.units};
        default: return {};
    }
}

nn::ParamStore init_params(const nn::Graph& graph, std::uint64_t seed) {
    nn::ParamStore params(graph);
    std::mt19937_64 rng(seed);
    for (nn::NodeId id = 0; id < graph.size(); ++id) {
        Tensor& w = params[id].weight;
        if (w.empty()) continue;
        const Fan fan = fan_of(graph.node(id));
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan.in + fan.out));
        std::normal_distribution<double> dist(0.0, stddev);
        for (float& v : w.data()) v = static_cast<float>(dist(rng));
    }
    return params;
}

AdamState::AdamState(const nn::Graph& graph, AdamConfig config)
    : cfg(config), m(nn::ParamStore::zeros_like(graph)), v(nn::ParamStore::zeros_like(graph)) {}

void adam_step(nn::ParamStore& params, const nn::ParamStore& grads, AdamState& state, double lr) {
    if (state.cfg.weight_decay != 0.0) fail(ErrorCode::InvalidConfig, "weight decay must be 0 for every parameter");
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        fail(ErrorCode::ShapeMismatch, "optimizer state does not match the parameters");
    }
    ++state.step;
    const double b1 = state.cfg.beta1;
    const double b2 = state.cfg.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const double eps = state.cfg.eps;
    auto update = [&](Tensor& p, const Tensor& g, Tensor& m, Tensor& v) {
        if (p.empty()) return;
        if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
            fail(ErrorCode::ShapeMismatch, "gradient does not match its parameter");
        }
        auto ps = p.data();
        auto gs = g.data();
        auto ms = m.data();
        auto vs = v.data();
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const double gi = gs[i];
            const double mi = b1 * ms[i] + (1.0 - b1) * gi;
            const double vi = b2 * vs[i] + (1.0 - b2) * gi * gi;
            ms[i] = static_cast<float>(mi);
            vs[i] = static_cast<float>(vi);
            ps[i] = static_cast<float>(ps[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + eps));
        }
    };
    for (nn::NodeId id = 0; id < params.size(); ++id) {
        auto& p = params[id];
        const auto& g = grads[id];
        auto& m = state.m[id];
        auto& v = state.v[id];
        update(p.weight, g.weight, m.weight, v.weight);
        update(p.bias, g.bias, m.bias, v.bias);
        update(p.gamma, g.gamma, m.gamma, v.gamma);
        update(p.beta, g.beta, m.beta, v.beta);
    }
}

bool in_top_k(std::span<const float> logits, int label, std::size_t k) {
    const float target = logits[static_cast<std::size_t>(label)];
    std::size_t better = 0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        // Ties resolve toward the lower class index.
        if (logits[c] > target || (logits[c] == target && c < static_cast<std::size_t>(label))) ++better;
    }
    return better < k;
}

Evaluation evaluate(nn::Executor& exec, const nn::ParamStore& params, const data::DatasetSplit& split,
                    std::size_t batch_size, std::size_t limit) {
    Evaluation ev;
    data::BatchIterator it(split, batch_size, nullptr, limit);
    data::Batch batch;
    std::size_t seen = 0;
    double loss_sum = 0.0;
    std::size_t hit1 = 0;
    std::size_t hit5 = 0;
    const std::size_t classes = exec.graph().classes();
    while (it.next(batch)) {
        const Tensor& logits = exec.evaluate(params, batch.images);
        loss_sum += exec.loss(batch.labels) * static_cast<double>(batch.labels.size());
        for (std::size_t i = 0; i < batch.labels.size(); ++i) {
            const auto row = logits.data().subspan(i * classes, classes);
            hit1 += in_top_k(row, batch.labels[i], 1);
            hit5 += in_top_k(row, batch.labels[i], std::min<std::size_t>(5, classes));
        }
        seen += batch.labels.size();
    }
    if (seen == 0) return ev;
    ev.loss = loss_sum / static_cast<double>(seen);
    ev.top1 = static_cast<double>(hit1) / static_cast<double>(seen);
    ev.top5 = static_cast<double>(hit5) / static_cast<double>(seen);
    return ev;
}

std::string to_json_line(const EpochMetrics& m) {
    nlohmann::ordered_json j;
    j["epoch"] = m.epoch;
    j["lr"] = m.lr;
    j["train_loss"] = m.train_loss;
    j["train_acc"] = m.train_acc;
    j["test_loss"] = m.test_loss;
    j["test_top1"] = m.test_top1;
    j["test_top5"] = m.test_top5;
    j["seconds"] = m.seconds;
    return j.dump();
}

TrainState init_state(const nn::Graph& graph, const TrainConfig& cfg) {
    TrainState s;
    s.params = init_params(graph, cfg.seed);
    s.adam = AdamState(graph);
    s.epoch = 0;
    // Separate stream for shuffling and augmentation.
    s.rng.seed(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    return s;
}

FitResult fit(const nn::Graph& graph, TrainState& state, const data::DatasetSplit& train,
              const data::DatasetSplit& test, const TrainConfig& cfg, const FitHooks& hooks) {
    cfg.validate();
    if (state.adam.cfg.weight_decay != 0.0) fail(ErrorCode::InvalidConfig, "weight decay must be 0");
    FitResult result;
    result.best_params = state.params;
    result.metrics.best_test_top1 = -1.0;
    nn::Executor exec(graph);
    exec.set_input_grad(false);
    nn::ParamStore grads = nn::ParamStore::zeros_like(graph);
    const std::size_t classes = graph.classes();

    for (; state.epoch < cfg.epochs;) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochMetrics em;
        em.epoch = state.epoch;
        em.lr = lr_at(state.epoch, cfg);
        data::BatchIterator it(train, cfg.batch_size, &state.rng, cfg.train_limit);
        data::Batch batch;
        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t seen = 0;
        while (it.next(batch)) {
            const Tensor images = cfg.augment.identity() ? batch.images : data::augment(batch.images, cfg.augment, state.rng);
            const Tensor& logits = exec.forward(state.params, images, nn::Mode::Train);
            const double loss = exec.loss(batch.labels);
            if (!std::isfinite(loss)) fail(ErrorCode::InvalidConfig, "training diverged: non-finite loss");
            for (std::size_t i = 0; i < batch.labels.size(); ++i) {
                correct += in_top_k(logits.data().subspan(i * classes, classes), batch.labels[i], 1);
            }
            exec.backward(state.params, grads);
            if (hooks.on_gradients) hooks.on_gradients(state.adam.step + 1, state.params, grads);
            adam_step(state.params, grads, state.adam, em.lr);
            loss_sum += loss * static_cast<double>(batch.labels.size());
            seen += batch.labels.size();
        }
        em.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
        em.train_acc = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
        const Evaluation ev = evaluate(exec, state.params, test);
        em.test_loss = ev.loss;
        em.test_top1 = ev.top1;
        em.test_top5 = ev.top5;
        em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ++state.epoch;
        result.metrics.epochs.push_back(em);
        if (em.test_top1 > result.metrics.best_test_top1) {
            result.metrics.best_test_top1 = em.test_top1;
            result.metrics.best_epoch = em.epoch;
            result.best_params = state.params;
            if (hooks.on_best) hooks.on_best(em, state);
        }
        if (hooks.on_epoch) hooks.on_epoch(em, state);
    }
    if (result.metrics.best_test_top1 < 0.0) result.metrics.best_test_top1 = 0.0;
    return result;
}

std::vector<double> overfit(const nn::Graph& graph, nn::ParamStore& params, const data::Batch& batch,
                            std::size_t steps, double lr) {
    nn::Executor exec(graph);
    nn::ParamStore grads = nn::ParamStore::zeros_like(graph);
    AdamState adam(graph);
    std::vector<double> losses;
    losses.reserve(steps);
    for (std::size_t s = 0; s < steps; ++s) {
        exec.forward(params, batch.images, nn::Mode::Train);
        losses.push_back(exec.loss(batch.labels));
        exec.backward(params, grads);
        adam_step(params, grads, adam, lr);
    }
    return losses;
}

}  // namespace bitgrad::train
