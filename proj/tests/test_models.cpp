#include <doctest.h>

#include <cmath>

#include "uda/error.hpp"
#include "uda/losses.hpp"
#include "uda/models.hpp"
#include "uda/optim.hpp"
#include "uda/rng.hpp"

using namespace uda;

namespace {

ModelSpec small_spec() {
    ModelSpec spec;
    spec.encoder.widths = {4, 8, 3};
    spec.classifier.widths = {3, 2};
    spec.discriminator.widths = {3, 5, 1};
    return spec;
}

}  // namespace

TEST_CASE("init is deterministic and zero-biased") {
    const ModelParams a = init_params(small_spec(), 7);
    const ModelParams b = init_params(small_spec(), 7);
    const auto na = a.named_tensors();
    const auto nb = b.named_tensors();
    REQUIRE(na.size() == nb.size());
    for (std::size_t i = 0; i < na.size(); ++i)
        CHECK(na[i].second->values == nb[i].second->values);

    for (const DenseLayer& l : a.encoder.layers)
        for (double v : l.bias.values) CHECK(v == 0.0);
    for (double v : a.classifier.bias.values) CHECK(v == 0.0);

    const ModelParams c = init_params(small_spec(), 8);
    CHECK(c.encoder.layers[0].weight.values != a.encoder.layers[0].weight.values);
}

TEST_CASE("weight std tracks sqrt(2/fan_in) over many draws") {
    ModelSpec spec;
    spec.encoder.widths = {50, 200};  // 10^4 weights
    spec.classifier.widths = {200, 2};
    const ModelParams params = init_params(spec, 123);
    const Tensor2& w = params.encoder.layers[0].weight;
    double mean = 0.0;
    for (double v : w.values) mean += v;
    mean /= static_cast<double>(w.size());
    double var = 0.0;
    for (double v : w.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.size());
    const double expected_sd = std::sqrt(2.0 / 50.0);
    CHECK(std::sqrt(var) == doctest::Approx(expected_sd).epsilon(0.10));
}

TEST_CASE("inconsistent widths are rejected") {
    ModelSpec spec = small_spec();
    spec.classifier.widths = {4, 2};  // encoder emits 3
    CHECK_THROWS_AS(init_params(spec, 1), SpecError);

    ModelSpec bad_disc = small_spec();
    bad_disc.discriminator.widths = {3, 5, 2};  // output must be 1
    CHECK_THROWS_AS(init_params(bad_disc, 1), SpecError);

    ModelSpec degenerate = small_spec();
    degenerate.encoder.widths = {4};
    CHECK_THROWS_AS(init_params(degenerate, 1), SpecError);
}

TEST_CASE("zero params give zero features and uniform probabilities") {
    ModelParams params = init_params(small_spec(), 3);
    for (DenseLayer& l : params.encoder.layers) {
        for (double& v : l.weight.values) v = 0.0;
        for (double& v : l.bias.values) v = 0.0;
    }
    const Tensor2 x(5, 4, 1.25);
    const Tensor2 features = encode_value(params, x);
    for (double v : features.values) CHECK(v == 0.0);

    for (double& v : params.classifier.weight.values) v = 0.0;
    for (double& v : params.classifier.bias.values) v = 0.0;
    const Tensor2 logits = classify_value(params, features);
    const Tensor2 probs = softmax_rows(logits);
    for (double v : probs.values) CHECK(v == doctest::Approx(0.5));

    for (DenseLayer& l : params.discriminator.layers) {
        for (double& v : l.weight.values) v = 0.0;
        for (double& v : l.bias.values) v = 0.0;
    }
    const Tensor2 domain_logits = discriminate_value(params, features);
    CHECK(domain_logits.rows == 5);
    CHECK(domain_logits.cols == 1);
    for (double v : domain_logits.values) CHECK(v == 0.0);  // sigma(0) = 0.5
}

TEST_CASE("single linear layer encoder equals matmul plus bias") {
    ModelSpec spec;
    spec.encoder.widths = {3, 2};
    spec.classifier.widths = {2, 2};
    ModelParams params = init_params(spec, 5);
    Rng rng(17);
    Tensor2 x(4, 3);
    for (double& v : x.values) v = rng.uniform(-1.0, 1.0);
    const Tensor2 expected =
        add_bias(matmul(x, params.encoder.layers[0].weight),
                 params.encoder.layers[0].bias);
    CHECK(encode_value(params, x).values == expected.values);
}

TEST_CASE("shared encoder: source and target pass through the same function") {
    ModelParams params = init_params(small_spec(), 9);
    Rng rng(21);
    Tensor2 batch(6, 4);
    for (double& v : batch.values) v = rng.uniform(-2.0, 2.0);
    const Tensor2 as_source = encode_value(params, batch);
    const Tensor2 as_target = encode_value(params, batch);
    CHECK(as_source.values == as_target.values);  // no per-domain state anywhere
}

TEST_CASE("forward passes are pure") {
    ModelParams params = init_params(small_spec(), 33);
    Tensor2 x(2, 4, 0.7);
    const Tensor2 first = encode_value(params, x);
    const Tensor2 second = encode_value(params, x);
    CHECK(first.values == second.values);
}

TEST_CASE("classifier argmax follows a sign-picking weight") {
    ModelSpec spec;
    spec.encoder.widths = {2, 2};
    spec.classifier.widths = {2, 2};
    ModelParams params = init_params(spec, 1);
    // identity encoder
    params.encoder.layers[0].weight = Tensor2::from_rows({{1, 0}, {0, 1}});
    params.encoder.layers[0].bias = Tensor2(1, 2, 0.0);
    // class 1 iff feature[0] > 0
    params.classifier.weight = Tensor2::from_rows({{-1, 1}, {0, 0}});
    params.classifier.bias = Tensor2(1, 2, 0.0);

    const Tensor2 x = Tensor2::from_rows({{2.0, 0.3}, {-1.5, 0.9}});
    const Tensor2 logits = classify_value(params, encode_value(params, x));
    const std::vector<int> predicted = argmax_rows(logits);
    CHECK(predicted == std::vector<int>{1, 0});
    CHECK(logits.rows == 2);
    CHECK(logits.cols == 2);
}

TEST_CASE("parameter count matches sum of layer sizes") {
    const ModelParams params = init_params(small_spec(), 2);
    // encoder 4*8+8 + 8*3+3, classifier 3*2+2, discriminator 3*5+5 + 5*1+1
    const std::size_t expected = (4 * 8 + 8) + (8 * 3 + 3) + (3 * 2 + 2) +
                                 (3 * 5 + 5) + (5 * 1 + 1);
    CHECK(params.param_count() == expected);
}

TEST_CASE("argmax ties break toward the lowest class index") {
    const Tensor2 scores = Tensor2::from_rows({{0.5, 0.5, 0.1}, {0.2, 0.3, 0.3}});
    CHECK(argmax_rows(scores) == std::vector<int>{0, 1});
}

TEST_CASE("probe on identical feature distributions cannot beat chance by much") {
    // Train a small discriminator on two identically distributed feature
    // sets; held-out BCE should stay near ln 2.
    Rng rng(404);
    const std::size_t n = 400, d = 4;
    Tensor2 source(n, d), target(n, d);
    for (double& v : source.values) v = rng.normal();
    for (double& v : target.values) v = rng.normal();

    MlpSpec probe_spec;
    probe_spec.widths = {d, 8, 1};
    Mlp probe = init_mlp_params(probe_spec, 5);
    std::vector<ParamRef> refs = mlp_param_refs(probe, "probe");
    OptimizerSettings opt;
    opt.learning_rate = 1e-3;
    OptimizerState state(opt, refs);

    const std::size_t train_n = 320;
    for (int epoch = 0; epoch < 30; ++epoch) {
        for (std::size_t begin = 0; begin < train_n; begin += 64) {
            const std::size_t take = std::min<std::size_t>(64, train_n - begin);
            Tensor2 x(2 * take, d);
            std::vector<int> y(2 * take);
            for (std::size_t i = 0; i < take; ++i) {
                for (std::size_t j = 0; j < d; ++j) {
                    x.at(i, j) = source.at(begin + i, j);
                    x.at(take + i, j) = target.at(begin + i, j);
                }
                y[i] = 1;
                y[take + i] = 0;
            }
            Tape t;
            Var logits = mlp_forward(t, probe, t.constant(std::move(x)), true);
            Var loss = bce_with_logits(t, logits, y);
            t.backward(loss);
            state.step(refs, 0);
        }
    }

    const std::size_t held = n - train_n;
    Tensor2 x(2 * held, d);
    std::vector<int> y(2 * held);
    for (std::size_t i = 0; i < held; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            x.at(i, j) = source.at(train_n + i, j);
            x.at(held + i, j) = target.at(train_n + i, j);
        }
        y[i] = 1;
        y[held + i] = 0;
    }
    Tape t;
    Var loss = bce_with_logits(t, mlp_forward(t, probe, t.constant(x), false), y);
    CHECK(t.value(loss).values[0] > std::log(2.0) - 0.1);
}
