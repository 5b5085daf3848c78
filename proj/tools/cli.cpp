#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bitgrad/arch.hpp"
#include "bitgrad/data.hpp"
#include "bitgrad/error.hpp"
#include "bitgrad/kernels.hpp"
#include "bitgrad/modelio.hpp"
#include "bitgrad/nn/executor.hpp"
#include "bitgrad/nn/ops.hpp"
#include "bitgrad/train.hpp"
#include "bitgrad/verify.hpp"

namespace bitgrad::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// Raised for missing or inconsistent flags that CLI11 cannot express.
struct UsageError {
    std::string message;
    const CLI::App* command;
};

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string pad_right(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

std::string pad_left(std::string s, std::size_t width) {
    if (s.size() < width) s.insert(0, width - s.size(), ' ');
    return s;
}

fs::path resolve_data_dir(const std::string& flag, const CLI::App* command) {
    const fs::path root = flag.empty() ? data::data_dir() : fs::path(flag);
    if (root.empty()) throw UsageError{"--data-dir is required (or set BITGRAD_DATA_DIR)", command};
    return root;
}

train::Evaluation evaluate_packed(const modelio::PackedModel& model, const data::DatasetSplit& split,
                                  std::size_t batch_size, std::size_t limit) {
    data::BatchIterator it(split, batch_size, nullptr, limit);
    data::Batch batch;
    train::Evaluation ev;
    std::size_t seen = 0;
    const std::size_t classes = model.graph().classes();
    while (it.next(batch)) {
        const Tensor logits = model.forward(batch.images);
        const std::size_t n = batch.labels.size();
        std::vector<float> probs(n * classes);
        ev.loss += ops::softmax_xent_forward<float>(logits.data(), n, classes, batch.labels, probs) *
                   static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = logits.data().subspan(i * classes, classes);
            ev.top1 += train::in_top_k(row, batch.labels[i], 1);
            ev.top5 += train::in_top_k(row, batch.labels[i], 5);
        }
        seen += n;
    }
    if (seen > 0) {
        ev.loss /= static_cast<double>(seen);
        ev.top1 /= static_cast<double>(seen);
        ev.top5 /= static_cast<double>(seen);
    }
    return ev;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
    std::string arch;
    std::string train_config;
    std::string data_dir;
    std::string out;
    std::string resume;
    std::size_t epochs = 0;
    std::size_t train_limit = 0;
    std::uint64_t seed = 0;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a, const CLI::App* cmd, bool as_json, std::ostream& out) {
    const fs::path root = resolve_data_dir(a.data_dir, cmd);
    const arch::ArchSpec spec = arch::load_arch(a.arch);
    const nn::Graph graph = arch::build_network(spec);
    const data::DatasetKind kind = data::dataset_for(spec.input);
    train::TrainConfig cfg = !a.train_config.empty() ? train::load_train_config(a.train_config)
                             : kind == data::DatasetKind::Mnist ? train::mnist_defaults()
                                                                : train::cifar10_smoke();
    if (cmd->count("--epochs")) cfg.epochs = a.epochs;
    if (cmd->count("--train-limit")) cfg.train_limit = a.train_limit;
    if (cmd->count("--seed")) cfg.seed = a.seed;
    cfg.validate();
    const data::Dataset ds = data::load_dataset(root, kind);

    train::TrainState state;
    if (!a.resume.empty()) {
        const modelio::Checkpoint ckpt = modelio::load_checkpoint(a.resume);
        if (!(ckpt.spec == spec)) fail(ErrorCode::InvalidConfig, "checkpoint architecture differs from --arch");
        state = modelio::restore(ckpt);
    } else {
        state = train::init_state(graph, cfg);
    }

    const fs::path dir = a.out;
    fs::create_directories(dir);
    const fs::path metrics_path = dir / "metrics.jsonl";
    const fs::path last_path = dir / "last.ckpt";
    const fs::path best_path = dir / "best.ckpt";
    std::ofstream metrics(metrics_path, a.resume.empty() ? std::ios::trunc : std::ios::app);
    if (!metrics) fail(ErrorCode::Io, "cannot write " + metrics_path.string());

    if (!as_json && !a.quiet) {
        out << "epoch        lr  train_loss  train_acc  test_loss  test_top1  test_top5   seconds\n";
    }
    train::FitHooks hooks;
    hooks.on_epoch = [&](const train::EpochMetrics& m, const train::TrainState& s) {
        const std::string line = train::to_json_line(m);
        metrics << line << '\n';
        metrics.flush();
        modelio::save_checkpoint(last_path, modelio::make_checkpoint(spec, s));
        if (a.quiet) return;
        if (as_json) {
            out << line << '\n';
        } else {
            out << pad_left(std::to_string(m.epoch), 5) << pad_left(fixed(m.lr, 6), 10)
                << pad_left(fixed(m.train_loss, 4), 12) << pad_left(fixed(100 * m.train_acc, 2), 11)
                << pad_left(fixed(m.test_loss, 4), 11) << pad_left(fixed(100 * m.test_top1, 2), 11)
                << pad_left(fixed(100 * m.test_top5, 2), 11) << pad_left(fixed(m.seconds, 1), 10) << '\n';
        }
        out.flush();
    };
    hooks.on_best = [&](const train::EpochMetrics&, const train::TrainState& s) {
        modelio::save_checkpoint(best_path, modelio::make_checkpoint(spec, s));
    };
    const train::FitResult result = train::fit(graph, state, ds.train, ds.test, cfg, hooks);

    if (as_json) {
        json j;
        j["command"] = "train";
        j["epochs"] = result.metrics.epochs.size();
        j["best_epoch"] = result.metrics.best_epoch;
        j["best_test_top1"] = result.metrics.best_test_top1;
        j["metrics"] = metrics_path.string();
        j["checkpoint"] = last_path.string();
        j["best_checkpoint"] = best_path.string();
        out << j.dump() << '\n';
    } else if (!result.metrics.epochs.empty()) {
        out << "best test top-1 " << fixed(100 * result.metrics.best_test_top1, 2) << "% at epoch "
            << result.metrics.best_epoch << "; checkpoints in " << dir.string() << '\n';
    }
    return 0;
}

// ------------------------------------------------------------------- eval

struct EvalArgs {
    std::string model;
    std::string data_dir;
    std::size_t limit = 0;
    std::size_t batch = 256;
};

int cmd_eval(const EvalArgs& a, const CLI::App* cmd, bool as_json, std::ostream& out) {
    const bool packed = modelio::is_packed_file(a.model);
    train::Evaluation ev;
    std::size_t samples = 0;
    if (packed) {
        const modelio::PackedModel model = modelio::load_packed(a.model);
        const data::Dataset ds = data::load_dataset(resolve_data_dir(a.data_dir, cmd), data::dataset_for(model.spec().input));
        samples = a.limit == 0 ? ds.test.size() : std::min(a.limit, ds.test.size());
        ev = evaluate_packed(model, ds.test, a.batch, a.limit);
    } else {
        const modelio::Checkpoint ckpt = modelio::load_checkpoint(a.model);
        const data::Dataset ds = data::load_dataset(resolve_data_dir(a.data_dir, cmd), data::dataset_for(ckpt.spec.input));
        samples = a.limit == 0 ? ds.test.size() : std::min(a.limit, ds.test.size());
        nn::Executor exec(arch::build_network(ckpt.spec));
        ev = train::evaluate(exec, ckpt.params, ds.test, a.batch, a.limit);
    }
    if (as_json) {
        json j;
        j["command"] = "eval";
        j["model"] = a.model;
        j["format"] = packed ? "packed" : "checkpoint";
        j["samples"] = samples;
        j["loss"] = ev.loss;
        j["top1"] = ev.top1;
        j["top5"] = ev.top5;
        out << j.dump() << '\n';
    } else {
        out << "model    " << a.model << " (" << (packed ? "packed" : "checkpoint") << ")\n"
            << "samples  " << samples << '\n'
            << "loss     " << fixed(ev.loss, 4) << '\n'
            << "top-1    " << fixed(100 * ev.top1, 2) << "%\n"
            << "top-5    " << fixed(100 * ev.top5, 2) << "%\n";
    }
    return 0;
}

// ----------------------------------------------------------------- export

struct ExportArgs {
    std::string checkpoint;
    std::string out;
    std::string offset = "explicit";
};

int cmd_export(const ExportArgs& a, bool as_json, std::ostream& out) {
    const auto ckpt_bytes = modelio::read_bytes(a.checkpoint);
    const modelio::Checkpoint ckpt = modelio::decode_checkpoint(ckpt_bytes);
    const OffsetMode mode = a.offset == "learned" ? OffsetMode::Learned : OffsetMode::Explicit;
    const modelio::PackedModel model = modelio::export_packed(ckpt, mode);
    const auto bytes = modelio::encode_packed(model);
    modelio::write_bytes(a.out, bytes);
    const double ratio = static_cast<double>(ckpt_bytes.size()) / static_cast<double>(bytes.size());
    if (as_json) {
        json j;
        j["command"] = "export";
        j["out"] = a.out;
        j["offset"] = a.offset;
        j["layers"] = model.layers().size();
        j["checkpoint_bytes"] = ckpt_bytes.size();
        j["packed_bytes"] = bytes.size();
        j["compression"] = ratio;
        out << j.dump() << '\n';
    } else {
        out << "wrote " << a.out << ": " << bytes.size() << " bytes (" << fixed(bytes.size() / 1024.0, 1)
            << " KB), " << model.layers().size() << " layers, offset " << a.offset << '\n'
            << "checkpoint " << ckpt_bytes.size() << " bytes, compression " << fixed(ratio, 1) << "x\n";
    }
    return 0;
}

// ----------------------------------------------------------------- verify

struct VerifyArgs {
    std::size_t trials = 1000;
    std::size_t max_k = 4096;
    std::uint64_t seed = 1;
};

int cmd_verify(const VerifyArgs& a, bool as_json, std::ostream& out) {
    std::vector<std::size_t> lengths;
    for (std::size_t k : default_check_lengths()) {
        if (k <= a.max_k) lengths.push_back(k);
    }
    if (a.max_k > 0 && std::find(lengths.begin(), lengths.end(), a.max_k) == lengths.end()) lengths.push_back(a.max_k);
    const XnorReport report = check_xnor_equivalence(lengths, a.trials, a.seed);
    const std::size_t bad = report.mismatches();
    if (as_json) {
        json rows = json::array();
        for (const XnorCheck& r : report.rows) {
            rows.push_back({{"k", r.k},
                            {"trials", r.trials},
                            {"explicit_mismatches", r.explicit_mismatches},
                            {"learned_mismatches", r.learned_mismatches}});
        }
        json j;
        j["command"] = "verify";
        j["rows"] = rows;
        j["mismatches"] = bad;
        j["seconds"] = report.seconds;
        out << j.dump() << '\n';
    } else {
        out << "     k  trials  explicit  learned\n";
        for (const XnorCheck& r : report.rows) {
            out << pad_left(std::to_string(r.k), 6) << pad_left(std::to_string(r.trials), 8)
                << pad_left(std::to_string(r.explicit_mismatches), 10)
                << pad_left(std::to_string(r.learned_mismatches), 9) << '\n';
        }
        out << bad << " mismatches (" << fixed(report.seconds, 2) << " s)\n";
    }
    return bad == 0 ? 0 : 1;
}

// ------------------------------------------------------------------- size

struct SizeArgs {
    std::vector<std::string> configs;
    bool breakdown = false;
};

std::map<std::string, std::size_t> bytes_by_kind(const arch::SizeReport& r) {
    std::map<std::string, std::size_t> totals;
    for (const arch::LayerSize& l : r.breakdown) totals[std::string(nn::to_string(l.kind))] += l.bytes;
    return totals;
}

int cmd_size(const SizeArgs& a, bool as_json, std::ostream& out) {
    json rows = json::array();
    if (!as_json) {
        out << pad_right("config", 28) << pad_left("depth", 6) << pad_left("binary params", 15)
            << pad_left("fp params", 12) << pad_left("size MB", 9) << pad_left("size KB", 10) << '\n';
    }
    for (const std::string& path : a.configs) {
        const arch::ArchSpec spec = arch::load_arch(path);
        const nn::Graph graph = arch::build_network(spec);
        const arch::SizeReport r = arch::size_report(graph);
        const std::string name = fs::path(path).filename().string();
        if (as_json) {
            json j;
            j["config"] = name;
            j["depth"] = arch::depth(graph);
            j["binary_params"] = r.binary_param_count;
            j["fp_params"] = r.fp_param_count;
            j["bytes"] = r.size_bytes;
            j["mb"] = r.mib();
            j["kb"] = r.kib();
            if (a.breakdown) {
                json layers = json::array();
                for (const arch::LayerSize& l : r.breakdown) {
                    layers.push_back({{"name", l.name},
                                      {"kind", std::string(nn::to_string(l.kind))},
                                      {"binary_params", l.binary_params},
                                      {"fp_params", l.fp_params},
                                      {"bytes", l.bytes}});
                }
                j["layers"] = layers;
                json kinds = json::object();
                for (const auto& [kind, bytes] : bytes_by_kind(r)) kinds[kind] = bytes;
                j["bytes_by_kind"] = kinds;
            }
            rows.push_back(j);
            continue;
        }
        out << pad_right(name, 28) << pad_left(std::to_string(arch::depth(graph)), 6)
            << pad_left(std::to_string(r.binary_param_count), 15) << pad_left(std::to_string(r.fp_param_count), 12)
            << pad_left(fixed(r.mib(), 2), 9) << pad_left(fixed(r.kib(), 1), 10) << '\n';
        if (a.breakdown) {
            for (const arch::LayerSize& l : r.breakdown) {
                out << "  " << pad_right(l.name, 34) << pad_right(std::string(nn::to_string(l.kind)), 12)
                    << pad_left(std::to_string(l.binary_params), 11) << pad_left(std::to_string(l.fp_params), 12)
                    << pad_left(std::to_string(l.bytes), 11) << '\n';
            }
            // Subtotals show which layer kinds a gap to a published size comes from.
            for (const auto& [kind, bytes] : bytes_by_kind(r)) {
                out << "  " << pad_right("total " + kind, 46) << pad_left(std::to_string(bytes), 34) << pad_left(
                           fixed(100.0 * static_cast<double>(bytes) / static_cast<double>(r.size_bytes), 1) + "%", 8)
                    << '\n';
            }
        }
    }
    if (as_json) out << json{{"command", "size"}, {"models", rows}}.dump() << '\n';
    return 0;
}

// ------------------------------------------------------------------ bench

struct BenchArgs {
    std::vector<std::size_t> ks{64, 1152, 4096};
    std::size_t m = 64;
    std::size_t n = 64;
    std::size_t repeats = 5;
};

// Median seconds per call; each repeat loops until about 20 ms have passed.
template <class Fn>
double median_seconds(std::size_t repeats, Fn&& fn) {
    using clock = std::chrono::steady_clock;
    std::vector<double> samples;
    for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
        std::size_t calls = 0;
        const auto t0 = clock::now();
        double elapsed = 0.0;
        do {
            fn();
            ++calls;
            elapsed = std::chrono::duration<double>(clock::now() - t0).count();
        } while (elapsed < 0.02);
        samples.push_back(elapsed / static_cast<double>(calls));
    }
    std::nth_element(samples.begin(), samples.begin() + samples.size() / 2, samples.end());
    return samples[samples.size() / 2];
}

int cmd_bench(const BenchArgs& a, bool as_json, std::ostream& out) {
    std::mt19937_64 rng(7);
    std::bernoulli_distribution coin(0.5);
    json rows = json::array();
    if (!as_json) {
        out << "    m     n      k   float us  float GOP/s    xnor us   xnor GOP/s  agree\n";
    }
    for (std::size_t k : a.ks) {
        std::vector<float> av(a.m * k);
        std::vector<float> bv(a.n * k);
        for (float& v : av) v = coin(rng) ? 1.0f : -1.0f;
        for (float& v : bv) v = coin(rng) ? 1.0f : -1.0f;
        std::vector<float> cf(a.m * a.n);
        std::vector<float> cx(a.m * a.n);
        const BitTensor pa = pack(av, a.m, k, PadRole::Input);
        const BitTensor pb = pack(bv, a.n, k, PadRole::Weight);
        const double tf = median_seconds(a.repeats, [&] {
            gemm<float>(Trans::No, Trans::Yes, a.m, a.n, k, 1.0f, av.data(), k, bv.data(), k, 0.0f, cf.data(), a.n);
        });
        const double tx = median_seconds(a.repeats, [&] { xnor_gemm(pa, pb, OffsetMode::Explicit, k, cx); });
        const bool agree = cf == cx;
        const double ops = 2.0 * static_cast<double>(a.m * a.n * k);
        if (as_json) {
            rows.push_back({{"m", a.m},
                            {"n", a.n},
                            {"k", k},
                            {"float_seconds", tf},
                            {"xnor_seconds", tx},
                            {"float_gops", ops / tf / 1e9},
                            {"xnor_gops", ops / tx / 1e9},
                            {"agree", agree}});
        } else {
            out << pad_left(std::to_string(a.m), 5) << pad_left(std::to_string(a.n), 6)
                << pad_left(std::to_string(k), 7) << pad_left(fixed(tf * 1e6, 1), 11)
                << pad_left(fixed(ops / tf / 1e9, 2), 13) << pad_left(fixed(tx * 1e6, 1), 11)
                << pad_left(fixed(ops / tx / 1e9, 2), 13) << pad_left(agree ? "yes" : "no", 7) << '\n';
        }
    }
    if (as_json) {
        out << json{{"command", "bench"}, {"repeats", a.repeats}, {"statistic", "median"}, {"rows", rows}}.dump()
            << '\n';
    }
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"bitgrad: binary neural network training and xnor/popcount inference", "bitgrad"};
    app.require_subcommand(1);
    app.fallthrough();
    bool as_json = false;
    app.add_flag("--json", as_json, "Print machine-readable JSON instead of tables");

    TrainArgs ta;
    CLI::App* train_cmd = app.add_subcommand("train", "Train a network from an architecture config");
    train_cmd->add_option("--arch", ta.arch, "Architecture config file")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--train-config", ta.train_config, "Training config file (defaults per dataset)")
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--data-dir", ta.data_dir, "Dataset root (falls back to BITGRAD_DATA_DIR)");
    train_cmd->add_option("--out", ta.out, "Output directory for metrics and checkpoints")->required();
    train_cmd->add_option("--resume", ta.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
    train_cmd->add_option("--epochs", ta.epochs, "Override the epoch count");
    train_cmd->add_option("--train-limit", ta.train_limit, "Use at most this many training samples per epoch");
    train_cmd->add_option("--seed", ta.seed, "Override the seed");
    train_cmd->add_flag("--quiet", ta.quiet, "Only print the final summary");

    EvalArgs ea;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or packed model on the test split");
    eval_cmd->add_option("--model", ea.model, "Checkpoint or packed model")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--data-dir", ea.data_dir, "Dataset root (falls back to BITGRAD_DATA_DIR)");
    eval_cmd->add_option("--limit", ea.limit, "Evaluate only the first N test samples");
    eval_cmd->add_option("--batch", ea.batch, "Batch size")->check(CLI::PositiveNumber);

    ExportArgs xa;
    CLI::App* export_cmd = app.add_subcommand("export", "Pack a checkpoint into a deployment model");
    export_cmd->add_option("--checkpoint", xa.checkpoint, "Training checkpoint")->required()->check(CLI::ExistingFile);
    export_cmd->add_option("--out", xa.out, "Packed model path")->required();
    export_cmd->add_option("--offset", xa.offset, "Offset mode of binary layers")
        ->check(CLI::IsMember({"explicit", "learned"}));

    VerifyArgs va;
    CLI::App* verify_cmd = app.add_subcommand("verify", "Check xnor/popcount against the float dot product");
    verify_cmd->add_option("--trials", va.trials, "Random operand pairs per length");
    verify_cmd->add_option("--max-k", va.max_k, "Largest reduction length");
    verify_cmd->add_option("--seed", va.seed, "RNG seed");

    SizeArgs sa;
    CLI::App* size_cmd = app.add_subcommand("size", "Report model size of architecture configs");
    size_cmd->add_option("--config", sa.configs, "Architecture config file(s)")->required()->check(CLI::ExistingFile);
    size_cmd->add_flag("--breakdown", sa.breakdown, "Per-layer rows");

    BenchArgs ba;
    CLI::App* bench_cmd = app.add_subcommand("bench", "Time packed xnor GEMM against float GEMM");
    bench_cmd->add_option("--k", ba.ks, "Reduction lengths")->delimiter(',')->check(CLI::PositiveNumber);
    bench_cmd->add_option("--m", ba.m, "Rows of the input operand")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--n", ba.n, "Rows of the weight operand")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--repeats", ba.repeats, "Repeats (median reported)")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const auto chosen = app.get_subcommands();
        err << (chosen.empty() ? app.help() : chosen.front()->help());
        return 2;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(ta, train_cmd, as_json, out);
        if (eval_cmd->parsed()) return cmd_eval(ea, eval_cmd, as_json, out);
        if (export_cmd->parsed()) return cmd_export(xa, as_json, out);
        if (verify_cmd->parsed()) return cmd_verify(va, as_json, out);
        if (size_cmd->parsed()) return cmd_size(sa, as_json, out);
        if (bench_cmd->parsed()) return cmd_bench(ba, as_json, out);
    } catch (const UsageError& e) {
        err << "error: " << e.message << "\n\n" << e.command->help();
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace bitgrad::cli
