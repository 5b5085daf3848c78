#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bitgrad/arch.hpp"
#include "bitgrad/bit_tensor.hpp"
#include "bitgrad/kernels.hpp"
#include "bitgrad/nn/graph.hpp"
#include "bitgrad/nn/params.hpp"
#include "bitgrad/tensor.hpp"
#include "bitgrad/train.hpp"

namespace bitgrad::modelio {

inline constexpr char kCheckpointMagic[8] = {'B', 'N', 'N', 'C', 'K', 'P', 'T', '1'};
inline constexpr char kPackedMagic[8] = {'B', 'N', 'N', 'P', 'A', 'C', 'K', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kPackedVersion = 1;

/// Full training state: latent real weights, running statistics, optionally
/// the optimizer moments, plus the RNG and epoch needed to resume.
struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    arch::ArchSpec spec;
    nn::ParamStore params;
    std::optional<train::AdamState> adam;
    /// std::mt19937_64 in its standard text form.
    std::string rng_state;
    std::size_t epoch = 0;

    bool operator==(const Checkpoint&) const = default;
};

Checkpoint make_checkpoint(const arch::ArchSpec& spec, const train::TrainState& state, bool with_optimizer = true);
/// Rebuilds the state. Without saved moments the optimizer starts fresh.
train::TrainState restore(const Checkpoint& ckpt);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// One parameter-carrying node of a deployment model.
///   BinaryConv / BinaryDense: `bits` = pack(sign(latent)), `scale`/`shift`
///     the per-filter affine applied to the xnor output (Learned mode folds
///     the (2, -k) correction in here).
///   Conv / Dense: `weight` and `shift` (the bias, possibly empty).
///   BatchNorm: `scale`/`shift` folded from the running statistics.
struct PackedLayer {
    nn::NodeId node = 0;
    nn::LayerKind kind = nn::LayerKind::Input;
    ConvGeometry geometry;
    std::size_t units = 0;
    OffsetMode offset = OffsetMode::Explicit;
    BitTensor bits;
    std::vector<float> weight;
    std::vector<float> scale;
    std::vector<float> shift;

    bool operator==(const PackedLayer&) const = default;
};

/// Immutable inference model; forward() keeps no state, so one instance can
/// serve many threads.
class PackedModel {
public:
    PackedModel() = default;
    PackedModel(arch::ArchSpec spec, OffsetMode mode, std::vector<PackedLayer> layers);

    const arch::ArchSpec& spec() const noexcept { return spec_; }
    const nn::Graph& graph() const noexcept { return graph_; }
    OffsetMode offset_mode() const noexcept { return mode_; }
    const std::vector<PackedLayer>& layers() const noexcept { return layers_; }
    const PackedLayer* layer_for(nn::NodeId id) const;

    /// Logits, N x classes.
    Tensor forward(const Tensor& batch) const;

    bool operator==(const PackedModel& o) const { return spec_ == o.spec_ && mode_ == o.mode_ && layers_ == o.layers_; }

private:
    arch::ArchSpec spec_;
    nn::Graph graph_{Shape{}};
    OffsetMode mode_ = OffsetMode::Explicit;
    std::vector<PackedLayer> layers_;
    std::vector<std::size_t> index_;  // node id -> layers_ slot or npos
};

/// Freezes a trained network. Throws IncompatibleLayer for input-scaled
/// (K map) binary layers, which need the real activations at inference.
PackedModel export_packed(const arch::ArchSpec& spec, const nn::ParamStore& params,
                          OffsetMode mode = OffsetMode::Explicit);
PackedModel export_packed(const Checkpoint& ckpt, OffsetMode mode = OffsetMode::Explicit);

std::vector<std::uint8_t> encode_packed(const PackedModel& model);
/// BadMagic, VersionMismatch or Truncated on malformed input.
PackedModel decode_packed(std::span<const std::uint8_t> bytes);
void save_packed(const std::filesystem::path& path, const PackedModel& model);
PackedModel load_packed(const std::filesystem::path& path);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// True if the file starts with the packed-model magic.
bool is_packed_file(const std::filesystem::path& path);

}  // namespace bitgrad::modelio
