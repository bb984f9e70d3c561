#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "onli/field/volume.hpp"
#include "onli/neuralop/kernels.hpp"

namespace onli {

struct ModelConfig {
    int layers = 5;
    int modes = 20;
    int width = 23;
    int in_channels = 7;
    int out_channels = 2;
    bool spade = false;
    int spade_hidden = 32;
    int spade_classes = 6;
    Activation activation = Activation::gelu;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

// "key = value" lines; parse rejects unknown keys.
std::string format_model_config(const ModelConfig& c);
ModelConfig parse_model_config(const std::string& text);

// Offsets into the flat parameter vector. Order: lift, then per layer the
// spectral weights (complex, interleaved re/im), the local weights and bias,
// and the SPADE block when enabled, then the two projection stages.
struct LayerOffsets {
    std::size_t spectral, local_w, local_b;
    std::size_t conv1_w, conv1_b, gamma_w, gamma_b, beta_w, beta_b;
};

struct ParamLayout {
    std::size_t lift_w, lift_b;
    std::vector<LayerOffsets> layers;
    std::size_t proj1_w, proj1_b, proj2_w, proj2_b;
    std::size_t total;
};

ParamLayout param_layout(const ModelConfig& c);

struct ParamGroup {
    std::string name;
    std::size_t offset, size;
};

// Contiguous named groups covering the flat vector in order.
std::vector<ParamGroup> param_groups(const ModelConfig& c);

// Real scalars in the flat vector; a complex weight counts as two.
std::size_t param_count(const ModelConfig& c);
// Same count with a complex weight counted once.
std::size_t param_count_complex_as_one(const ModelConfig& c);
std::size_t spade_block_size(const ModelConfig& c);

struct Model {
    ModelConfig config;
    ParamLayout layout;
    std::vector<double> params;

    Model() = default;
    // All parameters zero.
    explicit Model(const ModelConfig& c);

    const std::complex<double>* spectral(int layer) const {
        return reinterpret_cast<const std::complex<double>*>(params.data() + layout.layers[layer].spectral);
    }
    SpadeWeights spade(int layer) const;
};

// Spectral weights complex Gaussian with variance 1 / (w m^3); pointwise maps
// U(-1/sqrt(fan_in), 1/sqrt(fan_in)); SPADE gamma bias starts at 1.
Model init_model(const ModelConfig& c, std::uint64_t seed);

// x: normalized 7-channel input. mask required iff the model uses SPADE; it
// must share the input grid.
RealVolume model_forward(const Model& model, const RealVolume& x, const SegmentationMask* mask = nullptr);

// Shared pre-flight checks of model_forward.
void check_forward_inputs(const Model& model, const RealVolume& x, const SegmentationMask* mask);

} // namespace onli
