#include <doctest.h>

#include <cmath>
#include <functional>

#include "uda/error.hpp"
#include "uda/optim.hpp"
#include "uda/rng.hpp"
#include "uda/tensor.hpp"

using namespace uda;

namespace {

// Independent central-difference oracle: evaluates f at x +/- h per element.
std::vector<double> finite_diff(Tensor2& x, const std::function<double()>& f,
                                double h = 1e-5) {
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x.values[i];
        x.values[i] = saved + h;
        const double hi = f();
        x.values[i] = saved - h;
        const double lo = f();
        x.values[i] = saved;
        grad[i] = (hi - lo) / (2.0 * h);
    }
    return grad;
}

double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-3});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

Tensor2 ones(std::size_t r, std::size_t c) { return Tensor2(r, c, 1.0); }

}  // namespace

TEST_CASE("matmul identity cases") {
    const Tensor2 a = Tensor2::from_rows({{1, 2}, {3, 4}});
    const Tensor2 eye = Tensor2::from_rows({{1, 0}, {0, 1}});
    const Tensor2 r = matmul(a, eye);
    CHECK(r.values == std::vector<double>{1, 2, 3, 4});

    const Tensor2 col = Tensor2::from_rows({{5}, {7}});
    const Tensor2 r2 = matmul(eye, col);
    CHECK(r2.rows == 2);
    CHECK(r2.cols == 1);
    CHECK(r2.values == std::vector<double>{5, 7});
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
    const Tensor2 a(2, 3);
    const Tensor2 b(4, 2);
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("2x3"), DimensionError);
    try {
        matmul(a, b);
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("4x2") != std::string::npos);
    }
}

TEST_CASE("matmul gradient of sum matches hand value and finite differences") {
    Tensor2 a = Tensor2::from_rows({{1, 2}});
    Tensor2 b = Tensor2::from_rows({{3}, {4}});
    Tape t;
    Var loss = weighted_sum(t, matmul(t, t.parameter(a), t.parameter(b)), ones(1, 1));
    t.backward(loss);
    CHECK((*a.grad)[0] == doctest::Approx(3.0));
    CHECK((*a.grad)[1] == doctest::Approx(4.0));

    Tensor2 a2 = Tensor2::from_rows({{1, 2}});
    const std::vector<double> fd = finite_diff(a2, [&]() {
        Tape tp;
        return tp
            .value(weighted_sum(tp, matmul(tp, tp.constant(a2), tp.constant(b)),
                                ones(1, 1)))
            .values[0];
    });
    CHECK(max_rel_err(*a.grad, fd) < 1e-6);
}

TEST_CASE("add_bias broadcast and gradients") {
    const Tensor2 x = Tensor2::from_rows({{1, 1}});
    const Tensor2 zero_bias(1, 2, 0.0);
    CHECK(add_bias(x, zero_bias).values == std::vector<double>{1, 1});

    const Tensor2 x2 = Tensor2::from_rows({{1, 2}, {3, 4}});
    const Tensor2 b2 = Tensor2::from_rows({{10, 20}});
    CHECK(add_bias(x2, b2).values == std::vector<double>{11, 22, 13, 24});

    // gradient of sum w.r.t. bias counts the rows
    Tensor2 x3(3, 2, 0.5);
    Tensor2 b3(1, 2, 0.0);
    Tape t;
    Var loss =
        weighted_sum(t, add_bias(t, t.constant(x3), t.parameter(b3)), ones(3, 2));
    t.backward(loss);
    CHECK(*b3.grad == std::vector<double>{3, 3});

    CHECK_THROWS_AS(add_bias(x2, Tensor2(1, 3)), DimensionError);
}

TEST_CASE("relu forward and subgradient") {
    const Tensor2 x = Tensor2::from_rows({{-1, 0, 2}});
    CHECK(relu(x).values == std::vector<double>{0, 0, 2});

    const Tensor2 pos = Tensor2::from_rows({{0.5, 3, 7}});
    CHECK(relu(pos).values == pos.values);

    Tensor2 kinked = Tensor2::from_rows({{-1, 2}});
    Tape t;
    Var loss = weighted_sum(t, relu(t, t.parameter(kinked)), ones(1, 2));
    t.backward(loss);
    CHECK(*kinked.grad == std::vector<double>{0, 1});
}

TEST_CASE("softmax cross entropy: uniform, saturated, oracle gradient") {
    Tape t;
    Var logits = t.constant(Tensor2(2, 3, 0.0));
    SoftmaxXent xent = softmax_cross_entropy(t, logits, {0, 2});
    CHECK(t.value(xent.loss).values[0] == doctest::Approx(std::log(3.0)));
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(xent.probs.at(i, j) == doctest::Approx(1.0 / 3.0));

    // saturated logits stay finite thanks to log-sum-exp
    Tape t2;
    Var big = t2.constant(Tensor2::from_rows({{1000, 0}}));
    SoftmaxXent sat = softmax_cross_entropy(t2, big, {0});
    CHECK(t2.value(sat.loss).values[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::isfinite(t2.value(sat.loss).values[0]));

    // label out of range names the row
    Tape t3;
    Var z = t3.constant(Tensor2(3, 4, 0.0));
    CHECK_THROWS_WITH_AS(softmax_cross_entropy(t3, z, {0, 9, 1}),
                         doctest::Contains("row 1"), LabelError);

    // analytic gradient vs the finite-difference oracle on random logits
    Rng rng(42);
    Tensor2 random_logits(4, 5);
    for (double& v : random_logits.values) v = rng.uniform(-2.0, 2.0);
    std::vector<int> labels = {3, 0, 4, 1};

    Tensor2 logits_param = random_logits;
    Tape t4;
    Var loss = softmax_cross_entropy(t4, t4.parameter(logits_param), labels).loss;
    t4.backward(loss);
    const std::vector<double> fd = finite_diff(random_logits, [&]() {
        Tape tp;
        return tp.value(softmax_cross_entropy(tp, tp.constant(random_logits), labels).loss)
            .values[0];
    });
    CHECK(max_rel_err(*logits_param.grad, fd) < 1e-6);
}

TEST_CASE("softmax rows sum to one within 1e-12") {
    Rng rng(7);
    Tensor2 logits(6, 4);
    for (double& v : logits.values) v = rng.uniform(-30.0, 30.0);
    const Tensor2 probs = softmax_rows(logits);
    for (std::size_t i = 0; i < probs.rows; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < probs.cols; ++j) {
            CHECK(probs.at(i, j) >= 0.0);
            CHECK(probs.at(i, j) <= 1.0);
            sum += probs.at(i, j);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("bce with logits: ln2 at zero, saturation, oracle gradient") {
    Tape t;
    Var z = t.constant(Tensor2(4, 1, 0.0));
    Var loss = bce_with_logits(t, z, {0, 1, 0, 1});
    CHECK(t.value(loss).values[0] == doctest::Approx(std::log(2.0)));

    Tape t2;
    Var sat = t2.constant(Tensor2(1, 1, 20.0));
    CHECK(t2.value(bce_with_logits(t2, sat, {1})).values[0] ==
          doctest::Approx(0.0).epsilon(1e-8));

    Tape t3;
    Var z3 = t3.constant(Tensor2(2, 1, 0.0));
    CHECK_THROWS_AS(bce_with_logits(t3, z3, {0, 2}), LabelError);

    Rng rng(11);
    Tensor2 logits(8, 1);
    for (double& v : logits.values) v = rng.uniform(-2.0, 2.0);
    std::vector<int> labels;
    for (int i = 0; i < 8; ++i) labels.push_back(static_cast<int>(rng.next_below(2)));

    Tensor2 logits_param = logits;
    Tape t4;
    Var l4 = bce_with_logits(t4, t4.parameter(logits_param), labels);
    t4.backward(l4);
    const std::vector<double> fd = finite_diff(logits, [&]() {
        Tape tp;
        return tp.value(bce_with_logits(tp, tp.constant(logits), labels)).values[0];
    });
    CHECK(max_rel_err(*logits_param.grad, fd) < 1e-6);
}

TEST_CASE("stabilized losses are finite across the logit range") {
    for (double z : {-1e4, -500.0, -1.0, 0.0, 1.0, 500.0, 1e4}) {
        Tape t;
        Var logits = t.constant(Tensor2(1, 1, z));
        CHECK(std::isfinite(t.value(bce_with_logits(t, logits, {1})).values[0]));
        Tape t2;
        Var two = t2.constant(Tensor2::from_rows({{z, 0.0}}));
        CHECK(std::isfinite(
            t2.value(softmax_cross_entropy(t2, two, {0}).loss).values[0]));
    }
}

TEST_CASE("property: analytic gradients match finite differences on random ops") {
    Rng rng(2024);
    for (int draw = 0; draw < 10; ++draw) {
        Tensor2 a(3, 4), b(4, 2), w(3, 2);
        for (double& v : a.values) v = rng.uniform(-2.0, 2.0);
        for (double& v : b.values) v = rng.uniform(-2.0, 2.0);
        for (double& v : w.values) v = rng.uniform(-1.0, 1.0);

        Tensor2 a_param = a, b_param = b;
        Tape t;
        Var loss = weighted_sum(
            t, matmul(t, t.parameter(a_param), t.parameter(b_param)), w);
        t.backward(loss);
        auto value = [&]() {
            Tape tp;
            return tp.value(weighted_sum(tp, matmul(tp, tp.constant(a), tp.constant(b)), w))
                .values[0];
        };
        CHECK(max_rel_err(*a_param.grad, finite_diff(a, value)) < 1e-4);
        CHECK(max_rel_err(*b_param.grad, finite_diff(b, value)) < 1e-4);
    }
}

TEST_CASE("tape backward is single-shot") {
    Tensor2 x(1, 1, 2.0);
    Tape t;
    Var loss = weighted_sum(t, t.parameter(x), ones(1, 1));
    t.backward(loss);
    CHECK_THROWS_AS(t.backward(loss), StateError);
}

TEST_CASE("tape rejects non-scalar backward roots") {
    Tape t;
    Var x = t.constant(Tensor2(2, 2, 1.0));
    CHECK_THROWS_AS(t.backward(x), DimensionError);
}

TEST_CASE("shared parameter accumulates gradient from both uses") {
    Tensor2 x = Tensor2::from_rows({{1.0}});
    Tape t;
    Var leaf_a = t.parameter(x);
    Var leaf_b = t.parameter(x);
    Var total = add(t, scale(t, leaf_a, 2.0), scale(t, leaf_b, 3.0));
    t.backward(total);
    CHECK((*x.grad)[0] == doctest::Approx(5.0));
}

TEST_CASE("optimizer: zero gradient leaves parameters unchanged") {
    Tensor2 p(2, 2, 1.5);
    p.grad = std::vector<double>(4, 0.0);
    std::vector<ParamRef> refs{{"p", &p}};
    OptimizerSettings settings;
    settings.kind = OptimizerKind::SgdMomentum;
    OptimizerState state(settings, refs);
    state.step(refs, 0);
    CHECK(p.values == std::vector<double>(4, 1.5));

    Tensor2 q(1, 1, 2.0);
    q.grad = std::vector<double>{0.0};
    std::vector<ParamRef> qrefs{{"q", &q}};
    OptimizerSettings rms;
    rms.kind = OptimizerKind::RmsProp;
    OptimizerState rms_state(rms, qrefs);
    rms_state.step(qrefs, 0);
    CHECK(q.values[0] == 2.0);
}

TEST_CASE("sgd momentum recurrence hand value") {
    Tensor2 p(1, 1, 0.0);
    std::vector<ParamRef> refs{{"p", &p}};
    OptimizerSettings settings;
    settings.kind = OptimizerKind::SgdMomentum;
    settings.learning_rate = 0.1;
    settings.momentum = 0.9;
    OptimizerState state(settings, refs);

    p.grad = std::vector<double>{1.0};
    state.step(refs, 0);
    CHECK(p.values[0] == doctest::Approx(-0.1));
    p.grad = std::vector<double>{1.0};
    state.step(refs, 0);
    CHECK(p.values[0] == doctest::Approx(-0.29));
}

TEST_CASE("rmsprop single-step hand value") {
    Tensor2 p(1, 1, 1.0);
    std::vector<ParamRef> refs{{"p", &p}};
    OptimizerSettings settings;  // rmsprop defaults: rho 0.9, eps 1e-8
    settings.learning_rate = 0.01;
    OptimizerState state(settings, refs);
    p.grad = std::vector<double>{2.0};
    state.step(refs, 0);
    const double acc = 0.1 * 4.0;
    const double expected = 1.0 - 0.01 * 2.0 / std::sqrt(acc + 1e-8);
    CHECK(p.values[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("effective learning rate decays by epoch period") {
    Tensor2 p(1, 1, 0.0);
    std::vector<ParamRef> refs{{"p", &p}};
    OptimizerSettings settings;
    settings.learning_rate = 0.001;
    settings.decay_factor = 0.5;
    settings.decay_period = 60;
    OptimizerState state(settings, refs);
    CHECK(state.effective_lr(0) == doctest::Approx(0.001));
    CHECK(state.effective_lr(59) == doctest::Approx(0.001));
    CHECK(state.effective_lr(60) == doctest::Approx(0.0005));
    CHECK(state.effective_lr(120) == doctest::Approx(0.00025));
    // non-increasing over epochs
    for (std::size_t e = 1; e < 200; ++e)
        CHECK(state.effective_lr(e) <= state.effective_lr(e - 1));
}

TEST_CASE("optimizer step without gradient names the parameter") {
    Tensor2 p(1, 1, 0.0);
    std::vector<ParamRef> refs{{"encoder.w0", &p}};
    OptimizerState state(OptimizerSettings{}, refs);
    CHECK_THROWS_WITH_AS(state.step(refs, 0), doctest::Contains("encoder.w0"),
                         StateError);
}

TEST_CASE("gradients cleared after an optimizer step") {
    Tensor2 p(1, 1, 0.0);
    p.grad = std::vector<double>{1.0};
    std::vector<ParamRef> refs{{"p", &p}};
    OptimizerState state(OptimizerSettings{}, refs);
    state.step(refs, 0);
    CHECK(!p.grad.has_value());
}

TEST_CASE("same seed gives bitwise-identical rng streams") {
    Rng a(99), b(99);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}
