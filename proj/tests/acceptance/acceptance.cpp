// Acceptance suite: one PASS / FAIL / SKIP line per criterion.
// Exit status is 1 if anything failed, 77 if everything requested was skipped,
// 0 otherwise.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bitgrad/arch.hpp"
#include "bitgrad/binarize.hpp"
#include "bitgrad/data.hpp"
#include "bitgrad/kernels.hpp"
#include "bitgrad/modelio.hpp"
#include "bitgrad/nn/executor.hpp"
#include "bitgrad/nn/ops.hpp"
#include "bitgrad/train.hpp"
#include "bitgrad/verify.hpp"

using namespace bitgrad;
namespace fs = std::filesystem;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
    Status status = Status::Pass;
    std::string detail;
};

Outcome pass(std::string d) { return {Status::Pass, std::move(d)}; }
Outcome fail_with(std::string d) { return {Status::Fail, std::move(d)}; }
Outcome skip(std::string d) { return {Status::Skip, std::move(d)}; }
Outcome check(bool ok, std::string d) { return {ok ? Status::Pass : Status::Fail, std::move(d)}; }

std::string fmt(double v, int digits = 3) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path g_data_root;

std::optional<fs::path> dataset(data::DatasetKind kind) {
    if (g_data_root.empty() || !data::locate_dataset(g_data_root, kind)) return std::nullopt;
    return g_data_root;
}

arch::ArchSpec config(const std::string& name) {
    return arch::load_arch(fs::path(BITGRAD_CONFIG_DIR) / (name + ".cfg"));
}

// 1 and 2 share the same trials.
std::optional<XnorReport> g_xnor;
const XnorReport& xnor_report() {
    if (!g_xnor) {
        const auto lengths = default_check_lengths();
        g_xnor = check_xnor_equivalence(lengths, 1000, 2024);
    }
    return *g_xnor;
}

Outcome criterion_1() {
    const XnorReport& r = xnor_report();
    std::size_t bad = 0;
    std::size_t trials = 0;
    for (const auto& row : r.rows) {
        bad += row.explicit_mismatches;
        trials += row.trials;
    }
    return check(bad == 0 && r.rows.size() == 8 && r.seconds < 10.0,
                 std::to_string(trials) + " trials over 8 lengths, " + std::to_string(bad) + " mismatches, " +
                     fmt(r.seconds, 2) + " s");
}

Outcome criterion_2() {
    const XnorReport& r = xnor_report();
    std::size_t bad = 0;
    for (const auto& row : r.rows) bad += row.learned_mismatches;
    return check(bad == 0, "2*learned - k vs explicit: " + std::to_string(bad) + " mismatches");
}

Outcome criterion_3() {
    std::vector<float> grid;
    for (int i = -200; i <= 200; ++i) grid.push_back(static_cast<float>(i) * 0.01f);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(-3.0f, 3.0f);
    std::vector<float> g(grid.size());
    for (float& v : g) v = u(rng);
    const Tensor r = Tensor::vector(grid);
    const Tensor go = Tensor::vector(g);
    std::size_t bad = 0;
    std::size_t outside_nonzero = 0;
    for (BackwardRule rule : {BackwardRule::SteSign, BackwardRule::ApproxSign}) {
        BinarizeConfig cfg;
        cfg.backward = rule;
        const Tensor out = ste_backward(r, go, cfg);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const float a = std::fabs(grid[i]);
            float factor = 0.0f;
            if (a <= 1.0f) factor = rule == BackwardRule::SteSign ? 1.0f : 2.0f - 2.0f * a;
            if (out[i] != g[i] * factor) ++bad;
            if (a > 1.0f && out[i] != 0.0f) ++outside_nonzero;
        }
    }
    return check(bad == 0 && outside_nonzero == 0,
                 std::to_string(2 * grid.size()) + " grid points, " + std::to_string(bad) + " formula mismatches, " +
                     std::to_string(outside_nonzero) + " nonzero beyond the clip");
}

// Central differences against the analytic backward of one op; returns the worst relative error.
using Vec = std::vector<double>;

Vec random_vec(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Vec v(n);
    for (double& x : v) x = u(rng);
    return v;
}

double rel_err(Vec& x, const Vec& analytic, const std::function<double()>& loss, double h = 1e-4) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = loss();
        x[i] = keep - h;
        const double down = loss();
        x[i] = keep;
        const double num = (up - down) / (2.0 * h);
        worst = std::max(worst, std::fabs(num - analytic[i]) / std::max({1.0, std::fabs(num), std::fabs(analytic[i])}));
    }
    return worst;
}

double dot(const Vec& a, const Vec& b) { return std::inner_product(a.begin(), a.end(), b.begin(), 0.0); }

Outcome criterion_4() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(4);
    std::map<std::string, double> worst;

    for (int trial = 0; trial < 3; ++trial) {
        {
            const Shape in{2, 3, 6, 6};
            const ConvGeometry g{3, 3, trial == 1 ? 2u : 1u, 1};
            const std::size_t f = 4;
            const Shape out = conv_out_shape(in, f, g);
            Vec x = random_vec(in.size(), rng), w = random_vec(f * 27, rng), b = random_vec(f, rng);
            const Vec r = random_vec(out.size(), rng);
            auto loss = [&] {
                Vec y(out.size());
                ops::conv_forward<double>(x, in, w, b, f, g, 0.0, y);
                return dot(r, y);
            };
            Vec dx(x.size()), dw(w.size()), db(b.size());
            ops::conv_backward<double>(x, in, w, f, g, 0.0, r, dx, dw, db);
            worst["conv"] = std::max({worst["conv"], rel_err(x, dx, loss), rel_err(w, dw, loss), rel_err(b, db, loss)});
        }
        {
            const std::size_t n = 4, in = 9, out = 5;
            Vec x = random_vec(n * in, rng), w = random_vec(out * in, rng), b = random_vec(out, rng);
            const Vec r = random_vec(n * out, rng);
            auto loss = [&] {
                Vec y(n * out);
                ops::dense_forward<double>(x, n, in, w, b, out, y);
                return dot(r, y);
            };
            Vec dx(x.size()), dw(w.size()), db(b.size());
            ops::dense_backward<double>(x, n, in, w, out, r, dx, dw, db);
            worst["dense"] =
                std::max({worst["dense"], rel_err(x, dx, loss), rel_err(w, dw, loss), rel_err(b, db, loss)});
        }
        {
            const Shape s{4, 3, 3, 3};
            Vec x = random_vec(s.size(), rng, -2.0, 2.0), gm = random_vec(3, rng, 0.5, 1.5), bt = random_vec(3, rng);
            const Vec r = random_vec(s.size(), rng);
            auto loss = [&] {
                Vec y(s.size()), m(3), v(3), is(3);
                ops::batchnorm_train_forward<double>(x, s, gm, bt, 1e-5, y, m, v, is);
                return dot(r, y);
            };
            Vec y(s.size()), m(3), v(3), is(3);
            ops::batchnorm_train_forward<double>(x, s, gm, bt, 1e-5, y, m, v, is);
            Vec dx(x.size()), dg(3), db(3);
            ops::batchnorm_backward<double>(x, s, gm, m, is, r, dx, dg, db);
            worst["batchnorm"] = std::max(
                {worst["batchnorm"], rel_err(x, dx, loss), rel_err(gm, dg, loss), rel_err(bt, db, loss)});
        }
        {
            const Shape in{2, 2, 6, 6};
            const ConvGeometry g = trial == 0 ? ConvGeometry{2, 2, 2, 0} : ConvGeometry{3, 3, 2, 1};
            const Shape out = conv_out_shape(in, in.c, g);
            Vec x = random_vec(in.size(), rng);
            const Vec r = random_vec(out.size(), rng);
            auto max_loss = [&] {
                Vec y(out.size());
                ops::max_pool_forward<double>(x, in, g, y, {});
                return dot(r, y);
            };
            Vec y(out.size());
            std::vector<std::uint32_t> arg(out.size());
            ops::max_pool_forward<double>(x, in, g, y, arg);
            Vec dmx(x.size());
            ops::max_pool_backward<double>(r, arg, dmx);
            worst["maxpool"] = std::max(worst["maxpool"], rel_err(x, dmx, max_loss, 1e-6));
            auto avg_loss = [&] {
                Vec yy(out.size());
                ops::avg_pool_forward<double>(x, in, g, yy);
                return dot(r, yy);
            };
            Vec dax(x.size());
            ops::avg_pool_backward<double>(r, in, g, dax);
            worst["avgpool"] = std::max(worst["avgpool"], rel_err(x, dax, avg_loss));
            const Vec rg = random_vec(in.n * in.c, rng);
            auto gap_loss = [&] {
                Vec yy(in.n * in.c);
                ops::global_avg_pool_forward<double>(x, in, yy);
                return dot(rg, yy);
            };
            Vec dgx(x.size());
            ops::global_avg_pool_backward<double>(rg, in, dgx);
            worst["global_avg_pool"] = std::max(worst["global_avg_pool"], rel_err(x, dgx, gap_loss));
        }
    }
    const double secs = seconds_since(t0);
    double top = 0.0;
    std::string parts;
    for (const auto& [name, e] : worst) {
        top = std::max(top, e);
        parts += (parts.empty() ? "" : ", ") + name + " " + [&] {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.1e", e);
            return std::string(buf);
        }();
    }
    return check(top < 1e-4 && secs < 60.0, "max rel err " + parts + "; " + fmt(secs, 2) + " s");
}

Outcome criterion_5() {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> pos(0.05f, 4.0f);
    std::bernoulli_distribution coin(0.5);
    auto signs = [&](std::vector<std::size_t> dims) {
        Tensor t(std::move(dims));
        for (float& v : t.storage()) v = coin(rng) ? 1.0f : -1.0f;
        return t;
    };
    float worst_channel = 0.0f;
    float worst_whole = 0.0f;
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor x = signs({4, 6, 7, 7});
        Tensor w({5, 54});
        std::uniform_real_distribution<float> u(-1.0f, 1.0f);
        for (float& v : w.storage()) v = u(rng);
        const Tensor y = conv2d(x, sign_forward(w), {3, 3, 1, 1}, 1.0f);
        for (ScalingMode mode : {ScalingMode::WeightPerChannel, ScalingMode::WeightScalar}) {
            const Tensor alpha = weight_scale(w, mode);
            for (Spread spread : {Spread::AbsMean, Spread::StdDev}) {
                worst_channel = std::max(worst_channel, max_abs_diff(standardize_channels(scaled_binary_output(y, alpha, {}), spread),
                                                                     standardize_channels(y, spread)));
            }
        }
        Tensor random_alpha({5});
        for (float& a : random_alpha.storage()) a = pos(rng);
        worst_channel = std::max(worst_channel, max_abs_diff(standardize_channels(scaled_binary_output(y, random_alpha, {}), Spread::StdDev),
                                                             standardize_channels(y, Spread::StdDev)));
        const float beta = pos(rng);
        worst_whole = std::max(worst_whole, max_abs_diff(normalize_mean_abs(scale(y, beta)), normalize_mean_abs(y)));
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "per-channel max diff %.1e, whole-output max diff %.1e", worst_channel,
                  worst_whole);
    return check(worst_channel < 1e-5f && worst_whole < 1e-5f, buf);
}

Outcome criterion_6() {
    const auto root = dataset(data::DatasetKind::Mnist);
    if (!root) return skip("MNIST not found under the data directory");
    const auto t0 = std::chrono::steady_clock::now();
    const data::Dataset ds = data::load_dataset(*root, data::DatasetKind::Mnist);
    const arch::ArchSpec spec = config("lenet_mnist");
    const nn::Graph g = arch::build_network(spec);
    const train::TrainConfig cfg = train::load_train_config(fs::path(BITGRAD_CONFIG_DIR) / "mnist.train");
    train::TrainState st = train::init_state(g, cfg);
    train::FitHooks hooks;
    hooks.on_epoch = [](const train::EpochMetrics& m, const train::TrainState&) {
        std::cerr << "  epoch " << m.epoch << " loss " << fmt(m.train_loss, 4) << " test top-1 "
                  << fmt(100.0 * m.test_top1, 2) << "% (" << fmt(m.seconds, 1) << " s)\n";
    };
    const train::FitResult r = train::fit(g, st, ds.train, ds.test, cfg, hooks);
    const double final_top1 = r.metrics.epochs.back().test_top1;
    const double minutes = seconds_since(t0) / 60.0;
    return check(final_top1 >= 0.975, "final test top-1 " + fmt(100.0 * final_top1, 2) + "% (best " +
                                          fmt(100.0 * r.metrics.best_test_top1, 2) + "%, stretch 99.0%) after " +
                                          std::to_string(cfg.epochs) + " epochs in " + fmt(minutes, 1) + " min");
}

Outcome criterion_7() {
    struct Row {
        const char* config;
        double target;
        double tolerance;
        bool kb;
    };
    const std::vector<Row> rows{
        {"densenet_8_k256", 3.31, 0.05, false},      {"densenet_16_k128", 3.39, 0.05, false},
        {"densenet_32_k64", 3.45, 0.05, false},      {"densenet_16_k128_fp", 3.03, 0.05, false},
        {"densenet_32_k64_fp", 3.08, 0.05, false},   {"resnete18_imagenet", 3.36, 0.05, false},
        {"resnete34_imagenet", 4.59, 0.05, false},   {"resnete18_imagenet_fp", 4.0, 0.05, false},
        {"densenete21_k160_fp", 3.99, 0.05, false},  {"resnete34_imagenet_fp", 5.23, 0.05, false},
        {"lenet_mnist", 202.0, 0.10, true},          {"resnete18_cifar", 1.39, 0.05, false},
        {"densenete21_cifar", 1.49, 0.05, false},    {"densenete21_cifar_binary", 673.0, 0.05, true},
    };
    std::size_t bad = 0;
    double worst = 0.0;
    std::string worst_name;
    for (const Row& r : rows) {
        const arch::SizeReport rep = arch::size_report(config(r.config));
        const double got = r.kb ? rep.kib() : rep.mib();
        const double dev = std::fabs(got - r.target) / r.target;
        std::cout << "    " << r.config << ": " << fmt(got, 2) << (r.kb ? " KB" : " MB") << " vs " << r.target
                  << " (" << (got >= r.target ? "+" : "") << fmt(100.0 * (got - r.target) / r.target, 1) << "%)\n";
        if (dev > r.tolerance) ++bad;
        if (dev > worst) {
            worst = dev;
            worst_name = r.config;
        }
    }
    return check(bad == 0, std::to_string(rows.size()) + " table entries, " + std::to_string(bad) +
                               " outside tolerance; largest deviation " + fmt(100.0 * worst, 1) + "% (" + worst_name +
                               ")");
}

Outcome criterion_8() {
    const double a = arch::size_report(config("densenet_8_k256")).mib();
    const double b = arch::size_report(config("densenet_16_k128")).mib();
    const double c = arch::size_report(config("densenet_32_k64")).mib();
    const double step1 = std::fabs(b - a) / a;
    const double step2 = std::fabs(c - b) / b;
    return check(a < b && b < c && step1 < 0.05 && step2 < 0.05,
                 "8/k256 " + fmt(a, 2) + " < 16/k128 " + fmt(b, 2) + " < 32/k64 " + fmt(c, 2) + " MB; steps " +
                     fmt(100.0 * step1, 1) + "% and " + fmt(100.0 * step2, 1) + "%");
}

Outcome criterion_9() {
    const arch::ArchSpec spec = config("lenet_mnist");
    const nn::Graph g = arch::build_network(spec);
    Tensor images;
    std::string source;
    nn::ParamStore params;
    const auto root = dataset(data::DatasetKind::Mnist);
    if (root) {
        const data::Dataset ds = data::load_dataset(*root, data::DatasetKind::Mnist);
        train::TrainConfig cfg = train::mnist_defaults();
        cfg.epochs = 1;
        cfg.train_limit = 3000;
        train::TrainState st = train::init_state(g, cfg);
        train::fit(g, st, ds.train, ds.test, cfg);
        params = st.params;
        std::vector<std::size_t> idx(100);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        images = data::gather(ds.test, idx).images;
        source = "100 MNIST test images after a short training run";
    } else {
        // No data: random weights with perturbed running statistics on random inputs.
        params = train::init_params(g, 9);
        std::mt19937_64 rng(9);
        std::uniform_real_distribution<float> u(-0.5f, 0.5f);
        for (nn::NodeId id = 0; id < g.size(); ++id) {
            for (float& v : params[id].running_mean.storage()) v = u(rng);
            for (float& v : params[id].beta.storage()) v = u(rng);
        }
        images = Tensor({100, 1, 28, 28});
        for (float& v : images.storage()) v = 2.0f * u(rng);
        source = "100 random images (MNIST not found)";
    }
    nn::Executor ex(g);
    const Tensor ref = ex.evaluate(params, images);
    const std::size_t classes = g.classes();
    float worst = 0.0f;
    std::size_t argmax_diff = 0;
    for (OffsetMode mode : {OffsetMode::Explicit, OffsetMode::Learned}) {
        const modelio::PackedModel m =
            modelio::decode_packed(modelio::encode_packed(modelio::export_packed(spec, params, mode)));
        const Tensor y = m.forward(images);
        for (std::size_t i = 0; i < 100; ++i) {
            const auto a = ref.data().subspan(i * classes, classes);
            const auto b = y.data().subspan(i * classes, classes);
            for (std::size_t c = 0; c < classes; ++c) worst = std::max(worst, std::fabs(a[c] - b[c]));
            if (std::max_element(a.begin(), a.end()) - a.begin() != std::max_element(b.begin(), b.end()) - b.begin())
                ++argmax_diff;
        }
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "max |dlogit| %.1e, ", worst);
    return check(worst < 1e-4f && argmax_diff == 0,
                 source + ": " + buf + std::to_string(argmax_diff) + " argmax differences (explicit and learned)");
}

Outcome criterion_10() {
    const auto root = dataset(data::DatasetKind::Cifar10);
    if (!root) return skip("CIFAR-10 not found under the data directory; smoke run not attempted");
    const auto t0 = std::chrono::steady_clock::now();
    const data::Dataset ds = data::load_dataset(*root, data::DatasetKind::Cifar10);
    const arch::ArchSpec spec = config("resnete18_cifar");
    const nn::Graph g = arch::build_network(spec);
    const train::TrainConfig cfg = train::load_train_config(fs::path(BITGRAD_CONFIG_DIR) / "cifar10_smoke.train");
    train::TrainState st = train::init_state(g, cfg);
    train::FitHooks hooks;
    hooks.on_epoch = [](const train::EpochMetrics& m, const train::TrainState&) {
        std::cerr << "  epoch " << m.epoch << " loss " << fmt(m.train_loss, 4) << " test top-1 "
                  << fmt(100.0 * m.test_top1, 2) << "%\n";
    };
    const train::FitResult r = train::fit(g, st, ds.train, ds.test, cfg, hooks);
    bool decreasing = r.metrics.epochs.size() >= 5;
    for (std::size_t e = 1; e < 5 && e < r.metrics.epochs.size(); ++e) {
        decreasing = decreasing && r.metrics.epochs[e].train_loss < r.metrics.epochs[e - 1].train_loss;
    }
    const double top1 = r.metrics.epochs.back().test_top1;
    return check(top1 >= 0.60 && decreasing, "final test top-1 " + fmt(100.0 * top1, 2) + "%, first five epoch losses " +
                                                 (decreasing ? "strictly decreasing" : "not strictly decreasing") +
                                                 ", " + fmt(seconds_since(t0) / 60.0, 1) + " min");
}

Outcome criterion_11() {
    return skip("ImageNet accuracy is not reproducible at desk scale; architecture fidelity is covered by 7 and 8");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bitgrad acceptance suite"};
    std::vector<int> selected;
    std::string data_dir;
    app.add_option("--criteria", selected, "Criteria to run (default: all)")->delimiter(',');
    app.add_option("--data-dir", data_dir, "Dataset root (default: BITGRAD_DATA_DIR or the configured path)");
    CLI11_PARSE(app, argc, argv);

    g_data_root = data_dir.empty() ? data::data_dir(BITGRAD_TEST_DATA_DIR) : fs::path(data_dir);

    const std::map<int, std::pair<const char*, std::function<Outcome()>>> all{
        {1, {"xnor/popcount equals the +-1 dot product", criterion_1}},
        {2, {"learned offset is consistent with explicit", criterion_2}},
        {3, {"ste and approxsign backward formulas", criterion_3}},
        {4, {"real-layer gradient checks", criterion_4}},
        {5, {"normalization absorbs scaling factors", criterion_5}},
        {6, {"binary LeNet on MNIST reaches 97.5%", criterion_6}},
        {7, {"model sizes match the published tables", criterion_7}},
        {8, {"split-block size property", criterion_8}},
        {9, {"packed export matches float inference", criterion_9}},
        {10, {"CIFAR-10 smoke training", criterion_10}},
        {11, {"ImageNet accuracy tables", criterion_11}},
    };
    if (selected.empty())
        for (const auto& [id, _] : all) selected.push_back(id);

    std::size_t failed = 0, skipped = 0;
    for (int id : selected) {
        const auto it = all.find(id);
        if (it == all.end()) {
            std::cerr << "unknown criterion " << id << '\n';
            return 2;
        }
        Outcome o;
        try {
            o = it->second.second();
        } catch (const std::exception& e) {
            o = fail_with(std::string("threw: ") + e.what());
        }
        const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
        std::cout << tag << "  " << id << ". " << it->second.first << ": " << o.detail << std::endl;
        failed += o.status == Status::Fail;
        skipped += o.status == Status::Skip;
    }
    if (failed > 0) return 1;
    if (skipped == selected.size()) return 77;
    return 0;
}
