#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "uda/optim.hpp"
#include "uda/tensor.hpp"

namespace uda {

// Layer widths of a multilayer perceptron: input, hidden..., output.
// Hidden layers use ReLU; the output layer is linear.
struct MlpSpec {
    std::vector<std::size_t> widths;
    void validate(const std::string& role) const;
};

struct DenseLayer {
    Tensor2 weight;  // in x out
    Tensor2 bias;    // 1 x out
};

struct Mlp {
    std::vector<DenseLayer> layers;
    std::size_t input_width() const;
    std::size_t output_width() const;
    std::size_t param_count() const;
};

// Widths of the three networks. An empty discriminator spec means no
// discriminator is constructed at all (source-only training).
struct ModelSpec {
    MlpSpec encoder;        // input_dim, hidden..., d
    MlpSpec classifier;     // d, K
    MlpSpec discriminator;  // d, hidden..., 1 (or empty)
    void validate() const;
};

// Parameter sets of the shared encoder, the softmax classifier head and
// the domain discriminator. The encoder is a single parameter set applied
// identically to source and target inputs; no per-domain copy exists.
struct ModelParams {
    Mlp encoder;
    DenseLayer classifier;
    Mlp discriminator;  // empty layers when not constructed

    std::size_t input_dim() const { return encoder.input_width(); }
    std::size_t feature_dim() const { return encoder.output_width(); }
    std::size_t class_count() const { return classifier.weight.cols; }
    bool has_discriminator() const { return !discriminator.layers.empty(); }
    std::size_t param_count() const;

    std::vector<ParamRef> encoder_classifier_params();
    std::vector<ParamRef> discriminator_params();
    // Stable (name, tensor) enumeration shared with the checkpoint format.
    std::vector<std::pair<std::string, const Tensor2*>> named_tensors() const;
};

// He-style init: weights uniform on (-sqrt(6/fan_in), +sqrt(6/fan_in))
// so the sample std is sqrt(2/fan_in); biases zero. Deterministic in seed.
ModelParams init_params(const ModelSpec& spec, std::uint64_t seed);

// Standalone MLP with the same init scheme (probe networks, tests).
Mlp init_mlp_params(const MlpSpec& spec, std::uint64_t seed);
Var mlp_forward(Tape& t, Mlp& net, Var input, bool trainable);
Tensor2 mlp_forward_value(const Mlp& net, const Tensor2& input);
std::vector<ParamRef> mlp_param_refs(Mlp& net, const std::string& prefix);

// Recorded forwards. 'trainable' registers the network's weights as tape
// parameters; otherwise they enter as constants and receive no gradient
// (used to freeze the discriminator during the encoder update).
Var encode(Tape& t, ModelParams& params, Var input, bool trainable = true);
Var classify(Tape& t, ModelParams& params, Var features, bool trainable = true);
Var discriminate(Tape& t, ModelParams& params, Var features, bool trainable = true);

// Tape-free forwards for evaluation; same kernels, same bits.
Tensor2 encode_value(const ModelParams& params, const Tensor2& input);
Tensor2 classify_value(const ModelParams& params, const Tensor2& features);
Tensor2 discriminate_value(const ModelParams& params, const Tensor2& features);

// Argmax per row; ties broken by lowest class index.
std::vector<int> argmax_rows(const Tensor2& scores);

}  // namespace uda
