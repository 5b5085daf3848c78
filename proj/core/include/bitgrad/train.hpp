#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "bitgrad/data.hpp"
#include "bitgrad/nn/executor.hpp"
#include "bitgrad/nn/graph.hpp"
#include "bitgrad/nn/params.hpp"

namespace bitgrad::train {

struct TrainConfig {
    double lr_initial = 1e-3;
    std::vector<std::size_t> lr_decay_epochs{15};
    double lr_decay_factor = 0.1;
    std::size_t epochs = 20;
    std::size_t batch_size = 64;
    std::uint64_t seed = 1;
    /// Kept only so a nonzero value can be rejected.
    double weight_decay = 0.0;
    data::AugmentPolicy augment;
    /// Use at most this many training samples per epoch (0 = all).
    std::size_t train_limit = 0;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

TrainConfig parse_train_config(std::string_view text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string format_train_config(const TrainConfig& cfg);

/// Defaults for the datasets the engine ships recipes for.
TrainConfig mnist_defaults();
TrainConfig cifar10_defaults();
/// Short CIFAR-10 schedule used as the CI smoke target.
TrainConfig cifar10_smoke();

/// lr_initial * factor^(number of decay epochs <= epoch).
double lr_at(std::size_t epoch, const TrainConfig& cfg);

/// Glorot fan of a weight-carrying node.
struct Fan {
    std::size_t in = 0;
    std::size_t out = 0;
};
Fan fan_of(const nn::Node& node);

/// Weights ~ N(0, sqrt(2 / (fan_in + fan_out))), biases and beta 0, gamma 1.
nn::ParamStore init_params(const nn::Graph& graph, std::uint64_t seed);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    bool operator==(const AdamConfig&) const = default;
};

struct AdamState {
    AdamConfig cfg;
    nn::ParamStore m;
    nn::ParamStore v;
    std::uint64_t step = 0;

    AdamState() = default;
    explicit AdamState(const nn::Graph& graph, AdamConfig config = {});

    bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update. Throws InvalidConfig if any decay is set.
void adam_step(nn::ParamStore& params, const nn::ParamStore& grads, AdamState& state, double lr);

struct Evaluation {
    double loss = 0.0;
    double top1 = 0.0;
    double top5 = 0.0;
};

/// Top-k hits of one row of logits.
bool in_top_k(std::span<const float> logits, int label, std::size_t k);

Evaluation evaluate(nn::Executor& exec, const nn::ParamStore& params, const data::DatasetSplit& split,
                    std::size_t batch_size = 256, std::size_t limit = 0);

struct EpochMetrics {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_loss = 0.0;
    double test_top1 = 0.0;
    double test_top5 = 0.0;
    double seconds = 0.0;
};

std::string to_json_line(const EpochMetrics& m);

struct RunMetrics {
    std::vector<EpochMetrics> epochs;
    std::size_t best_epoch = 0;
    double best_test_top1 = 0.0;
};

/// Everything needed to continue a run bit-identically.
struct TrainState {
    nn::ParamStore params;
    AdamState adam;
    std::size_t epoch = 0;
    std::mt19937_64 rng;
};

TrainState init_state(const nn::Graph& graph, const TrainConfig& cfg);

struct FitHooks {
    /// After every backward pass, before the update.
    std::function<void(std::uint64_t step, const nn::ParamStore& params, const nn::ParamStore& grads)> on_gradients;
    /// After every epoch with the state at that point.
    std::function<void(const EpochMetrics&, const TrainState&)> on_epoch;
    /// When an epoch improves the best test top-1.
    std::function<void(const EpochMetrics&, const TrainState&)> on_best;
};

struct FitResult {
    RunMetrics metrics;
    nn::ParamStore best_params;
};

/// Trains from state.epoch up to cfg.epochs, single-threaded and deterministic.
FitResult fit(const nn::Graph& graph, TrainState& state, const data::DatasetSplit& train,
              const data::DatasetSplit& test, const TrainConfig& cfg, const FitHooks& hooks = {});

/// Runs `steps` Adam updates on one fixed batch and returns the loss of each step.
std::vector<double> overfit(const nn::Graph& graph, nn::ParamStore& params, const data::Batch& batch,
                            std::size_t steps, double lr);

}  // namespace bitgrad::train
