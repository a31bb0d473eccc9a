#include "uda/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "uda/error.hpp"
#include "uda/losses.hpp"
#include "uda/models.hpp"
#include "uda/rng.hpp"
#include "uda/tensor.hpp"

namespace uda {

namespace {

constexpr double kStep = 1e-5;

double rel_err(double analytic, double numeric) {
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    return std::abs(analytic - numeric) / denom;
}

Tensor2 random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double lo = -2.0,
                      double hi = 2.0) {
    Tensor2 t(rows, cols);
    for (double& v : t.values) v = rng.uniform(lo, hi);
    return t;
}

// One check instance: the harness perturbs `inputs` in place, re-running
// `value` (forward only) for the finite differences, and compares against
// one `analytic` reverse pass.
struct Scenario {
    std::vector<Tensor2*> inputs;
    std::function<double()> value;
    std::function<std::vector<std::vector<double>>()> analytic;
};

double check_scenario(Scenario& s) {
    const std::vector<std::vector<double>> grads = s.analytic();
    double worst = 0.0;
    for (std::size_t t = 0; t < s.inputs.size(); ++t) {
        Tensor2& tensor = *s.inputs[t];
        for (std::size_t i = 0; i < tensor.size(); ++i) {
            const double saved = tensor.values[i];
            tensor.values[i] = saved + kStep;
            const double hi = s.value();
            tensor.values[i] = saved - kStep;
            const double lo = s.value();
            tensor.values[i] = saved;
            const double fd = (hi - lo) / (2.0 * kStep);
            worst = std::max(worst, rel_err(grads[t][i], fd));
        }
    }
    return worst;
}

// --- elementary ops --------------------------------------------------------

double check_matmul(Rng& rng) {
    Tensor2 a = random_tensor(rng, 3, 4);
    Tensor2 b = random_tensor(rng, 4, 2);
    const Tensor2 w = random_tensor(rng, 3, 2, -1.0, 1.0);
    Scenario s;
    s.inputs = {&a, &b};
    s.value = [&]() {
        Tape t;
        return t.value(weighted_sum(t, matmul(t, t.constant(a), t.constant(b)), w))
            .values[0];
    };
    s.analytic = [&]() {
        a.clear_grad();
        b.clear_grad();
        Tape t;
        t.backward(weighted_sum(t, matmul(t, t.parameter(a), t.parameter(b)), w));
        return std::vector<std::vector<double>>{*a.grad, *b.grad};
    };
    return check_scenario(s);
}

double check_add_bias(Rng& rng) {
    Tensor2 x = random_tensor(rng, 5, 3);
    Tensor2 bias = random_tensor(rng, 1, 3);
    const Tensor2 w = random_tensor(rng, 5, 3, -1.0, 1.0);
    Scenario s;
    s.inputs = {&x, &bias};
    s.value = [&]() {
        Tape t;
        return t
            .value(weighted_sum(t, add_bias(t, t.constant(x), t.constant(bias)), w))
            .values[0];
    };
    s.analytic = [&]() {
        x.clear_grad();
        bias.clear_grad();
        Tape t;
        t.backward(weighted_sum(t, add_bias(t, t.parameter(x), t.parameter(bias)), w));
        return std::vector<std::vector<double>>{*x.grad, *bias.grad};
    };
    return check_scenario(s);
}

double check_relu(Rng& rng) {
    Tensor2 x = random_tensor(rng, 4, 6);
    for (double& v : x.values)  // stay away from the kink at zero
        while (std::abs(v) < 0.05) v = rng.uniform(-2.0, 2.0);
    const Tensor2 w = random_tensor(rng, 4, 6, -1.0, 1.0);
    Scenario s;
    s.inputs = {&x};
    s.value = [&]() {
        Tape t;
        return t.value(weighted_sum(t, relu(t, t.constant(x)), w)).values[0];
    };
    s.analytic = [&]() {
        x.clear_grad();
        Tape t;
        t.backward(weighted_sum(t, relu(t, t.parameter(x)), w));
        return std::vector<std::vector<double>>{*x.grad};
    };
    return check_scenario(s);
}

double check_softmax_xent(Rng& rng) {
    Tensor2 logits = random_tensor(rng, 4, 5);
    std::vector<int> labels(4);
    for (int& y : labels) y = static_cast<int>(rng.next_below(5));
    Scenario s;
    s.inputs = {&logits};
    s.value = [&]() {
        Tape t;
        return t.value(softmax_cross_entropy(t, t.constant(logits), labels).loss)
            .values[0];
    };
    s.analytic = [&]() {
        logits.clear_grad();
        Tape t;
        t.backward(softmax_cross_entropy(t, t.parameter(logits), labels).loss);
        return std::vector<std::vector<double>>{*logits.grad};
    };
    return check_scenario(s);
}

double check_bce(Rng& rng) {
    Tensor2 logits = random_tensor(rng, 8, 1);
    std::vector<int> labels(8);
    for (int& y : labels) y = rng.next_below(2) ? 1 : 0;
    Scenario s;
    s.inputs = {&logits};
    s.value = [&]() {
        Tape t;
        return t.value(bce_with_logits(t, t.constant(logits), labels)).values[0];
    };
    s.analytic = [&]() {
        logits.clear_grad();
        Tape t;
        t.backward(bce_with_logits(t, t.parameter(logits), labels));
        return std::vector<std::vector<double>>{*logits.grad};
    };
    return check_scenario(s);
}

double check_center_distance(Rng& rng) {
    Tensor2 features = random_tensor(rng, 6, 4);
    const Tensor2 anchors = random_tensor(rng, 3, 4);
    std::vector<int> labels(6);
    for (int& y : labels) y = static_cast<int>(rng.next_below(3));
    Scenario s;
    s.inputs = {&features};
    s.value = [&]() {
        Tape t;
        return t
            .value(sum_squared_row_distance(t, t.constant(features), labels, anchors))
            .values[0];
    };
    s.analytic = [&]() {
        features.clear_grad();
        Tape t;
        t.backward(sum_squared_row_distance(t, t.parameter(features), labels, anchors));
        return std::vector<std::vector<double>>{*features.grad};
    };
    return check_scenario(s);
}

// --- composite losses ------------------------------------------------------

struct CompositeSetup {
    ModelParams params;
    Tensor2 source;
    Tensor2 target;
    std::vector<int> labels;
    CenterTable centers;
    LossWeights weights;
};

// Small model with every term active. Resampled until the scenario is
// smooth at the probe point: relu pre-activations away from zero,
// filter probabilities away from the threshold and from pseudo-label ties.
CompositeSetup make_composite_setup(Rng& rng) {
    constexpr std::size_t kIn = 5, kHidden = 6, kFeat = 4, kClasses = 3;
    for (int attempt = 0; attempt < 200; ++attempt) {
        CompositeSetup setup;
        ModelSpec spec;
        spec.encoder.widths = {kIn, kHidden, kFeat};
        spec.classifier.widths = {kFeat, kClasses};
        spec.discriminator.widths = {kFeat, 5, 1};
        setup.params = init_params(spec, rng.next_u64());
        setup.source = random_tensor(rng, 7, kIn);
        setup.target = random_tensor(rng, 6, kIn);
        setup.labels.resize(7);
        for (int& y : setup.labels) y = static_cast<int>(rng.next_below(kClasses));
        setup.centers.centers = random_tensor(rng, kClasses, kFeat, -1.0, 1.0);
        setup.centers.gamma = 0.5;
        setup.centers.initialized = true;
        setup.weights.alpha = 2.0;
        setup.weights.beta1 = 0.1;
        setup.weights.beta2 = 0.1;
        setup.weights.threshold = 0.3;

        // Smoothness margins.
        bool ok = true;
        auto check_margins = [&](const Tensor2& batch) {
            const Tensor2 pre =
                add_bias(matmul(batch, setup.params.encoder.layers[0].weight),
                         setup.params.encoder.layers[0].bias);
            for (double v : pre.values)
                if (std::abs(v) < 1e-3) ok = false;
            const Tensor2 feats = encode_value(setup.params, batch);
            const Tensor2 disc_pre =
                add_bias(matmul(feats, setup.params.discriminator.layers[0].weight),
                         setup.params.discriminator.layers[0].bias);
            for (double v : disc_pre.values)
                if (std::abs(v) < 1e-3) ok = false;
        };
        check_margins(setup.source);
        check_margins(setup.target);
        const Tensor2 probs = softmax_rows(classify_value(
            setup.params, encode_value(setup.params, setup.target)));
        for (std::size_t i = 0; i < probs.rows && ok; ++i) {
            double best = -1.0, second = -1.0;
            for (std::size_t j = 0; j < probs.cols; ++j) {
                const double p = probs.at(i, j);
                if (p > best) {
                    second = best;
                    best = p;
                } else if (p > second) {
                    second = p;
                }
            }
            if (std::abs(best - setup.weights.threshold) < 0.02) ok = false;
            if (best - second < 0.02) ok = false;
        }
        if (ok) return setup;
    }
    throw StateError("gradcheck: could not sample a smooth composite scenario");
}

double composite_ec_value(CompositeSetup& s) {
    Tape t;
    Var src_feat = encode(t, s.params, t.constant(s.source), false);
    Var tgt_feat = encode(t, s.params, t.constant(s.target), false);
    LossParts parts;
    parts.classification = source_classification_loss(
        t, classify(t, s.params, src_feat, false), s.labels);
    AdversarialLosses adv =
        adversarial_losses(t, discriminate(t, s.params, src_feat, false),
                           discriminate(t, s.params, tgt_feat, false));
    parts.encoder_adv = adv.encoder;
    parts.center_source = center_loss_source(t, src_feat, s.labels, s.centers);
    const Tensor2 probs =
        softmax_rows(classify_value(s.params, t.value(tgt_feat)));
    const FilteredBatch filtered = filter_target(probs, s.weights.threshold);
    parts.center_target = conditional_loss_target(t, tgt_feat, filtered, s.centers);
    return t.value(total_objective(t, parts, s.weights).encoder_classifier)
        .values[0];
}

double check_composite_encoder_classifier(Rng& rng) {
    CompositeSetup setup = make_composite_setup(rng);
    std::vector<ParamRef> refs = setup.params.encoder_classifier_params();

    Scenario s;
    for (ParamRef& r : refs) s.inputs.push_back(r.tensor);
    s.inputs.push_back(&setup.source);
    s.inputs.push_back(&setup.target);
    s.value = [&]() { return composite_ec_value(setup); };
    s.analytic = [&]() {
        for (Tensor2* p : s.inputs) p->clear_grad();
        Tape t;
        Var src_in = t.parameter(setup.source);
        Var tgt_in = t.parameter(setup.target);
        Var src_feat = encode(t, setup.params, src_in, true);
        Var tgt_feat = encode(t, setup.params, tgt_in, true);
        LossParts parts;
        parts.classification = source_classification_loss(
            t, classify(t, setup.params, src_feat, true), setup.labels);
        AdversarialLosses adv = adversarial_losses(
            t, discriminate(t, setup.params, src_feat, false),
            discriminate(t, setup.params, tgt_feat, false));
        parts.encoder_adv = adv.encoder;
        parts.center_source =
            center_loss_source(t, src_feat, setup.labels, setup.centers);
        const Tensor2 probs =
            softmax_rows(classify_value(setup.params, t.value(tgt_feat)));
        const FilteredBatch filtered = filter_target(probs, setup.weights.threshold);
        parts.center_target =
            conditional_loss_target(t, tgt_feat, filtered, setup.centers);
        t.backward(total_objective(t, parts, setup.weights).encoder_classifier);
        std::vector<std::vector<double>> grads;
        for (Tensor2* p : s.inputs)
            grads.push_back(p->grad ? *p->grad
                                    : std::vector<double>(p->size(), 0.0));
        return grads;
    };
    return check_scenario(s);
}

double check_composite_discriminator(Rng& rng) {
    CompositeSetup setup = make_composite_setup(rng);
    // Detached features, exactly as the discriminator step sees them.
    const Tensor2 src_feat = encode_value(setup.params, setup.source);
    const Tensor2 tgt_feat = encode_value(setup.params, setup.target);
    std::vector<ParamRef> refs = setup.params.discriminator_params();

    Scenario s;
    for (ParamRef& r : refs) s.inputs.push_back(r.tensor);
    s.value = [&]() {
        Tape t;
        AdversarialLosses adv = adversarial_losses(
            t, discriminate(t, setup.params, t.constant(src_feat), false),
            discriminate(t, setup.params, t.constant(tgt_feat), false));
        return t.value(adv.discriminator).values[0];
    };
    s.analytic = [&]() {
        for (Tensor2* p : s.inputs) p->clear_grad();
        Tape t;
        AdversarialLosses adv = adversarial_losses(
            t, discriminate(t, setup.params, t.constant(src_feat), true),
            discriminate(t, setup.params, t.constant(tgt_feat), true));
        t.backward(adv.discriminator);
        std::vector<std::vector<double>> grads;
        for (Tensor2* p : s.inputs)
            grads.push_back(p->grad ? *p->grad
                                    : std::vector<double>(p->size(), 0.0));
        return grads;
    };
    return check_scenario(s);
}

}  // namespace

GradCheckReport run_gradient_checks(std::uint64_t seed, std::size_t draws) {
    Rng rng(seed);
    GradCheckReport report;
    const std::vector<std::pair<const char*, double (*)(Rng&)>> checks = {
        {"matmul", check_matmul},
        {"add_bias", check_add_bias},
        {"relu", check_relu},
        {"softmax_cross_entropy", check_softmax_xent},
        {"bce_with_logits", check_bce},
        {"center_distance", check_center_distance},
        {"encoder_classifier_total", check_composite_encoder_classifier},
        {"discriminator_total", check_composite_discriminator},
    };
    for (const auto& [name, fn] : checks) {
        GradCheckResult result;
        result.name = name;
        result.draws = draws;
        for (std::size_t i = 0; i < draws; ++i)
            result.max_rel_err = std::max(result.max_rel_err, fn(rng));
        report.max_rel_err = std::max(report.max_rel_err, result.max_rel_err);
        report.checks.push_back(std::move(result));
    }
    return report;
}

}  // namespace uda
