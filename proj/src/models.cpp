#include "uda/models.hpp"

#include <cmath>

#include "uda/error.hpp"
#include "uda/rng.hpp"

namespace uda {

void MlpSpec::validate(const std::string& role) const {
    if (widths.size() < 2)
        throw SpecError(role + ": needs at least input and output widths");
    for (std::size_t w : widths)
        if (w < 1) throw SpecError(role + ": zero layer width");
}

std::size_t Mlp::input_width() const {
    return layers.empty() ? 0 : layers.front().weight.rows;
}

std::size_t Mlp::output_width() const {
    return layers.empty() ? 0 : layers.back().weight.cols;
}

std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (const DenseLayer& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

void ModelSpec::validate() const {
    encoder.validate("encoder");
    classifier.validate("classifier");
    if (classifier.widths.size() != 2)
        throw SpecError("classifier: must be a single dense layer (two widths)");
    const std::size_t d = encoder.widths.back();
    if (classifier.widths.front() != d)
        throw SpecError("classifier input width " +
                        std::to_string(classifier.widths.front()) +
                        " != encoder output width " + std::to_string(d));
    if (!discriminator.widths.empty()) {
        discriminator.validate("discriminator");
        if (discriminator.widths.front() != d)
            throw SpecError("discriminator input width " +
                            std::to_string(discriminator.widths.front()) +
                            " != encoder output width " + std::to_string(d));
        if (discriminator.widths.back() != 1)
            throw SpecError("discriminator output width must be 1, got " +
                            std::to_string(discriminator.widths.back()));
    }
}

std::size_t ModelParams::param_count() const {
    return encoder.param_count() + classifier.weight.size() +
           classifier.bias.size() + discriminator.param_count();
}

std::vector<ParamRef> ModelParams::encoder_classifier_params() {
    std::vector<ParamRef> refs;
    for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
        refs.push_back({"encoder.w" + std::to_string(l), &encoder.layers[l].weight});
        refs.push_back({"encoder.b" + std::to_string(l), &encoder.layers[l].bias});
    }
    refs.push_back({"classifier.w", &classifier.weight});
    refs.push_back({"classifier.b", &classifier.bias});
    return refs;
}

std::vector<ParamRef> ModelParams::discriminator_params() {
    std::vector<ParamRef> refs;
    for (std::size_t l = 0; l < discriminator.layers.size(); ++l) {
        refs.push_back(
            {"discriminator.w" + std::to_string(l), &discriminator.layers[l].weight});
        refs.push_back(
            {"discriminator.b" + std::to_string(l), &discriminator.layers[l].bias});
    }
    return refs;
}

std::vector<std::pair<std::string, const Tensor2*>> ModelParams::named_tensors() const {
    std::vector<std::pair<std::string, const Tensor2*>> out;
    for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
        out.emplace_back("encoder.w" + std::to_string(l), &encoder.layers[l].weight);
        out.emplace_back("encoder.b" + std::to_string(l), &encoder.layers[l].bias);
    }
    out.emplace_back("classifier.w", &classifier.weight);
    out.emplace_back("classifier.b", &classifier.bias);
    for (std::size_t l = 0; l < discriminator.layers.size(); ++l) {
        out.emplace_back("discriminator.w" + std::to_string(l),
                         &discriminator.layers[l].weight);
        out.emplace_back("discriminator.b" + std::to_string(l),
                         &discriminator.layers[l].bias);
    }
    return out;
}

namespace {

Mlp init_mlp(const MlpSpec& spec, Rng& rng) {
    Mlp net;
    for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
        const std::size_t fan_in = spec.widths[l];
        const std::size_t fan_out = spec.widths[l + 1];
        DenseLayer layer{Tensor2(fan_in, fan_out), Tensor2(1, fan_out)};
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (double& w : layer.weight.values) w = rng.uniform(-limit, limit);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

}  // namespace

Var mlp_forward(Tape& t, Mlp& net, Var input, bool trainable) {
    const Tensor2& x = t.value(input);
    if (x.cols != net.input_width())
        throw DimensionError("forward: input " + x.shape_str() + " vs layer " +
                             net.layers.front().weight.shape_str());
    Var h = input;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        DenseLayer& layer = net.layers[l];
        Var w = trainable ? t.parameter(layer.weight) : t.constant(layer.weight);
        Var b = trainable ? t.parameter(layer.bias) : t.constant(layer.bias);
        h = add_bias(t, matmul(t, h, w), b);
        if (l + 1 < net.layers.size()) h = relu(t, h);
    }
    return h;
}

Tensor2 mlp_forward_value(const Mlp& net, const Tensor2& input) {
    if (input.cols != net.input_width())
        throw DimensionError("forward: input " + input.shape_str() + " vs layer " +
                             net.layers.front().weight.shape_str());
    Tensor2 h = input;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        h = add_bias(matmul(h, net.layers[l].weight), net.layers[l].bias);
        if (l + 1 < net.layers.size()) h = relu(h);
    }
    return h;
}

Mlp init_mlp_params(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate("mlp");
    Rng rng(seed);
    return init_mlp(spec, rng);
}

std::vector<ParamRef> mlp_param_refs(Mlp& net, const std::string& prefix) {
    std::vector<ParamRef> refs;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        refs.push_back({prefix + ".w" + std::to_string(l), &net.layers[l].weight});
        refs.push_back({prefix + ".b" + std::to_string(l), &net.layers[l].bias});
    }
    return refs;
}

ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    ModelParams params;
    params.encoder = init_mlp(spec.encoder, rng);
    Mlp cls = init_mlp(spec.classifier, rng);
    params.classifier = std::move(cls.layers.front());
    if (!spec.discriminator.widths.empty())
        params.discriminator = init_mlp(spec.discriminator, rng);
    return params;
}

Var encode(Tape& t, ModelParams& params, Var input, bool trainable) {
    return mlp_forward(t, params.encoder, input, trainable);
}

Var classify(Tape& t, ModelParams& params, Var features, bool trainable) {
    const Tensor2& f = t.value(features);
    if (f.cols != params.feature_dim())
        throw DimensionError("classify: features " + f.shape_str() +
                             " vs weight " + params.classifier.weight.shape_str());
    Var w = trainable ? t.parameter(params.classifier.weight)
                      : t.constant(params.classifier.weight);
    Var b = trainable ? t.parameter(params.classifier.bias)
                      : t.constant(params.classifier.bias);
    return add_bias(t, matmul(t, features, w), b);
}

Var discriminate(Tape& t, ModelParams& params, Var features, bool trainable) {
    if (!params.has_discriminator())
        throw StateError("discriminate: model has no discriminator");
    return mlp_forward(t, params.discriminator, features, trainable);
}

Tensor2 encode_value(const ModelParams& params, const Tensor2& input) {
    return mlp_forward_value(params.encoder, input);
}

Tensor2 classify_value(const ModelParams& params, const Tensor2& features) {
    if (features.cols != params.feature_dim())
        throw DimensionError("classify: features " + features.shape_str() +
                             " vs weight " + params.classifier.weight.shape_str());
    return add_bias(matmul(features, params.classifier.weight), params.classifier.bias);
}

Tensor2 discriminate_value(const ModelParams& params, const Tensor2& features) {
    if (!params.has_discriminator())
        throw StateError("discriminate: model has no discriminator");
    return mlp_forward_value(params.discriminator, features);
}

std::vector<int> argmax_rows(const Tensor2& scores) {
    std::vector<int> out(scores.rows, 0);
    for (std::size_t i = 0; i < scores.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < scores.cols; ++j)
            if (scores.at(i, j) > scores.at(i, best)) best = j;
        out[i] = static_cast<int>(best);
    }
    return out;
}

}  // namespace uda
