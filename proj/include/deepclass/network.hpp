#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "deepclass/ops.hpp"
#include "deepclass/tensor.hpp"

namespace deepclass {

enum class LayerKind { conv, maxpool, relu, flatten, dense };

std::string_view layer_kind_name(LayerKind kind);

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    // conv: square kernel
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    // maxpool
    std::size_t window = 0;
    // dense
    std::size_t units = 0;

    static LayerSpec conv(std::size_t out_channels, std::size_t kernel, std::size_t stride, std::size_t padding);
    static LayerSpec maxpool(std::size_t window, std::size_t stride);
    static LayerSpec relu();
    static LayerSpec flatten();
    static LayerSpec dense(std::size_t units);

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct LayerCensus {
    std::size_t conv = 0;
    std::size_t maxpool = 0;
    std::size_t dense = 0;
    std::size_t relu = 0;
    std::size_t flatten = 0;

    /// conv + maxpool + dense: the layers that count toward depth.
    std::size_t depth() const { return conv + maxpool + dense; }
};

/// Which layer-count requirement validation applies.
enum class CensusPolicy {
    deepclass,  // exactly 11 conv, 5 maxpool, 3 dense
    any,        // only the shape chain and the class-count head are checked
};

struct NetworkSpec {
    std::size_t channels = 3;
    std::size_t height = 128;
    std::size_t width = 128;
    std::size_t class_count = 7;
    std::vector<LayerSpec> layers;

    LayerCensus census() const;

    /// Per-sample output shape of every layer (no batch axis). Throws ValidationError
    /// on any shape-chain break.
    std::vector<Shape> shape_trace() const;

    void validate(CensusPolicy policy) const;

    /// Canonical UTF-8 text form used inside checkpoints.
    std::string to_text() const;
    static NetworkSpec from_text(std::string_view text);

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Five VGG-style blocks (2,2,2,2,3 convs of width 32,64,128,128,256), each followed by
/// 2x2 max-pooling, then dense 512 -> 512 -> 7. Input 3 x 128 x 128.
NetworkSpec deepclass_spec();

struct Parameter {
    std::string name;
    Tensor value;
};

/// Ordered named tensors; used for both parameters and their gradients.
using ParameterSet = std::vector<Parameter>;

struct Prediction {
    Tensor probs;
    std::vector<std::size_t> classes;  // argmax per row, lowest index on ties
};

class Network {
public:
    /// Zero-initialized parameters for a spec validated under `policy`.
    explicit Network(NetworkSpec spec, CensusPolicy policy = CensusPolicy::deepclass);

    /// He-uniform weights (bound sqrt(6/fan_in)), one seeded stream per parameter; zero biases.
    static Network initialized(NetworkSpec spec, std::uint64_t seed, CensusPolicy policy = CensusPolicy::deepclass);

    const NetworkSpec& spec() const noexcept { return spec_; }
    ParameterSet& parameters() noexcept { return params_; }
    const ParameterSet& parameters() const noexcept { return params_; }

    Tensor& parameter(std::string_view name);
    const Tensor& parameter(std::string_view name) const;

    /// Names and shapes the spec implies, in checkpoint order.
    static std::vector<std::pair<std::string, Shape>> parameter_layout(const NetworkSpec& spec);

    /// Logits [B x classes]. With train_mode the per-layer cache for backward() is filled.
    Tensor forward(const Tensor& batch, bool train_mode);

    /// Inference only; safe on a shared const network.
    Tensor infer(const Tensor& batch) const;

    /// Gradients of sum(d_logits * logits) for the cached batch; consumes the cache.
    ParameterSet backward(const Tensor& d_logits);

    Prediction predict(const Tensor& batch) const;

    bool has_cache() const noexcept { return !cache_.empty(); }
    void clear_cache() noexcept { cache_.clear(); }

private:
    struct LayerCache {
        Tensor input;
        Shape input_shape;
        std::vector<std::size_t> argmax;
    };

    struct Slot {
        std::size_t weight = 0;
        std::size_t bias = 0;
    };

    Tensor run(const Tensor& batch, std::vector<LayerCache>* cache) const;
    void check_batch(const Tensor& batch) const;

    NetworkSpec spec_;
    ParameterSet params_;
    std::vector<Slot> slots_;  // per layer; meaningful for conv and dense
    std::vector<LayerCache> cache_;
};

Network build_deepclass(std::uint64_t seed);

/// Per-row argmax, lowest index on ties.
std::vector<std::size_t> argmax_rows(const Tensor& scores);

// Checkpoint format: "DCLS" | u16 version (1) | u32 spec length | spec text |
// records of (u16 name length, name, u8 rank, u32 extents[rank], f32 data[]), all little-endian.
std::vector<std::uint8_t> serialize_checkpoint(const Network& net);
Network deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace deepclass
