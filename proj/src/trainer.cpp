#include "uda/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "uda/checkpoint.hpp"
#include "uda/error.hpp"

namespace uda {

namespace {

// Offset mixed into the config seed to derive the batch-shuffle stream,
// keeping it distinct from the weight-init stream.
constexpr std::uint64_t kBatchStreamSalt = 0x9E3779B97F4A7C15ull;

double accuracy(const ModelParams& params, const Tensor2& features,
                const std::vector<int>& labels) {
    if (features.rows == 0) return 0.0;
    const Tensor2 logits = classify_value(params, encode_value(params, features));
    const std::vector<int> predicted = argmax_rows(logits);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (predicted[i] == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

void check_finite(double value, const char* term, std::size_t epoch) {
    if (!std::isfinite(value))
        throw NumericError("non-finite " + std::string(term) + " at epoch " +
                           std::to_string(epoch) + "; aborting");
}

struct BatchStats {
    double disc = 0.0, enc_adv = 0.0, cls = 0.0, center_src = 0.0,
           center_tgt = 0.0, total = 0.0;
    std::size_t target_rows = 0, kept_rows = 0;
};

class TrainLoop {
public:
    TrainLoop(const DomainDataset& dataset, const TrainConfig& config,
              ModelParams params, CenterTable centers, std::size_t start_epoch)
        : dataset_(dataset),
          config_(config),
          params_(std::move(params)),
          centers_(std::move(centers)),
          start_epoch_(start_epoch),
          iterator_(dataset, config.batch_size,
                    config.seed + start_epoch + kBatchStreamSalt),
          ec_optimizer_(config.optimizer, params_.encoder_classifier_params()),
          disc_optimizer_(config.optimizer, params_.discriminator_params()) {}

    TrainResult run() {
        TrainReport report;
        report.start_epoch = start_epoch_;
        // "Until convergence" applies to the final schedule stage; earlier
        // stages run their fixed epoch ranges.
        const std::size_t last_stage_start = config_.stages.back().start_epoch;
        double best_loss = std::numeric_limits<double>::infinity();
        std::size_t stalled = 0;

        for (std::size_t epoch = start_epoch_; epoch < config_.max_epochs; ++epoch) {
            const auto t0 = std::chrono::steady_clock::now();
            const LossWeights weights = train_stage_weights(config_, epoch);
            BatchStats sums;
            std::size_t steps = 0;
            const Tensor2 centers_before = centers_.centers;

            if (epoch > start_epoch_) iterator_.start_epoch();
            while (auto batch = iterator_.next()) {
                BatchStats s = train_batch(*batch, weights, epoch);
                sums.disc += s.disc;
                sums.enc_adv += s.enc_adv;
                sums.cls += s.cls;
                sums.center_src += s.center_src;
                sums.center_tgt += s.center_tgt;
                sums.total += s.total;
                sums.target_rows += s.target_rows;
                sums.kept_rows += s.kept_rows;
                ++steps;
            }
            const double n = static_cast<double>(steps);

            EpochRecord rec;
            rec.epoch = epoch;
            rec.lr = ec_optimizer_.effective_lr(epoch);
            rec.alpha = weights.alpha;
            rec.beta1 = weights.beta1;
            rec.beta2 = weights.beta2;
            rec.loss_disc = sums.disc / n;
            rec.loss_enc_adv = sums.enc_adv / n;
            rec.loss_cls = sums.cls / n;
            rec.loss_center_src = sums.center_src / n;
            rec.loss_center_tgt = sums.center_tgt / n;
            rec.loss_total = sums.total / n;
            rec.phi_kept_fraction =
                sums.target_rows == 0
                    ? 0.0
                    : static_cast<double>(sums.kept_rows) /
                          static_cast<double>(sums.target_rows);
            if (centers_before.rows == centers_.centers.rows) {
                double drift = 0.0;
                for (std::size_t k = 0; k < centers_.centers.rows; ++k) {
                    double sq = 0.0;
                    for (std::size_t j = 0; j < centers_.centers.cols; ++j) {
                        const double d =
                            centers_.centers.at(k, j) - centers_before.at(k, j);
                        sq += d * d;
                    }
                    drift += std::sqrt(sq);
                }
                rec.center_drift = drift / static_cast<double>(centers_.centers.rows);
            }
            rec.source_test_acc = accuracy(params_, dataset_.source_test().features,
                                           dataset_.source_test().labels);
            rec.target_test_acc = accuracy(params_, dataset_.target_test().features,
                                           dataset_.target_test().labels);
            rec.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
            report.epochs.push_back(rec);

            if (epoch >= last_stage_start) {
                if (best_loss - rec.loss_total < config_.min_improvement) {
                    if (++stalled >= config_.patience) {
                        report.converged_early = true;
                        break;
                    }
                } else {
                    stalled = 0;
                }
                best_loss = std::min(best_loss, rec.loss_total);
            }
        }

        report.centers_zero_init = centers_.zero_init_classes;
        return {std::move(params_), std::move(centers_), std::move(report)};
    }

private:
    BatchStats train_batch(const BatchIterator::Batch& batch,
                           const LossWeights& weights, std::size_t epoch) {
        BatchStats stats;

        // Centers initialize from the first batch, before any
        // center-dependent loss can run.
        if (!centers_.initialized) {
            const Tensor2 first_features =
                encode_value(params_, batch.source_features);
            centers_ = init_centers(first_features, batch.source_labels,
                                    dataset_.class_count(), config_.gamma);
        }

        // Discriminator update on detached features.
        if (config_.variant.adversarial) {
            for (std::size_t k = 0; k < config_.discriminator_steps; ++k) {
                Tape tape;
                Var src_features =
                    tape.constant(encode_value(params_, batch.source_features));
                Var tgt_features =
                    tape.constant(encode_value(params_, batch.target_features));
                Var src_logits = discriminate(tape, params_, src_features, true);
                Var tgt_logits = discriminate(tape, params_, tgt_features, true);
                AdversarialLosses adv =
                    adversarial_losses(tape, src_logits, tgt_logits);
                const double disc_loss = tape.value(adv.discriminator).values[0];
                check_finite(disc_loss, "discriminator adversarial loss", epoch);
                stats.disc = disc_loss;
                tape.backward(adv.discriminator);
                disc_optimizer_.step(params_.discriminator_params(), epoch);
            }
        }

        // Encoder/classifier update; discriminator weights enter the tape
        // as constants so no gradient can reach them.
        Tape tape;
        Var source_input = tape.constant(batch.source_features);
        Var target_input = tape.constant(batch.target_features);
        Var src_features = encode(tape, params_, source_input, true);
        Var tgt_features = encode(tape, params_, target_input, true);

        LossParts parts;
        Var cls_logits = classify(tape, params_, src_features, true);
        parts.classification =
            source_classification_loss(tape, cls_logits, batch.source_labels);

        if (config_.variant.adversarial) {
            Var src_logits = discriminate(tape, params_, src_features, false);
            Var tgt_logits = discriminate(tape, params_, tgt_features, false);
            AdversarialLosses adv = adversarial_losses(tape, src_logits, tgt_logits);
            parts.encoder_adv = adv.encoder;
        }

        if (weights.beta1 != 0.0)
            parts.center_source =
                center_loss_source(tape, src_features, batch.source_labels, centers_);

        FilteredBatch filtered;
        if (weights.beta2 != 0.0) {
            // Pseudo-labels come from the classifier on the current target
            // features; the probabilities only select rows, no gradient
            // flows through them.
            const Tensor2 target_probs = softmax_rows(
                classify_value(params_, tape.value(tgt_features)));
            filtered = filter_target(target_probs, weights.threshold);
            stats.target_rows = filtered.total_rows;
            stats.kept_rows = filtered.kept_rows.size();
            parts.center_target =
                conditional_loss_target(tape, tgt_features, filtered, centers_);
        }

        TotalObjective objective = total_objective(tape, parts, weights);

        auto term_value = [&](Var v) {
            return v.valid() ? tape.value(v).values[0] : 0.0;
        };
        stats.enc_adv = term_value(parts.encoder_adv);
        stats.cls = term_value(parts.classification);
        stats.center_src = term_value(parts.center_source);
        stats.center_tgt = term_value(parts.center_target);
        stats.total = term_value(objective.encoder_classifier);
        check_finite(stats.enc_adv, "encoder adversarial loss", epoch);
        check_finite(stats.cls, "classification loss", epoch);
        check_finite(stats.center_src, "source center loss", epoch);
        check_finite(stats.center_tgt, "target center loss", epoch);
        check_finite(stats.total, "encoder/classifier total loss", epoch);

        // Source features as plain values, before the step moves the
        // encoder; the center update consumes them detached.
        const Tensor2 detached_source_features = tape.value(src_features);

        tape.backward(objective.encoder_classifier);
        ec_optimizer_.step(params_.encoder_classifier_params(), epoch);

        update_centers(centers_, detached_source_features, batch.source_labels);
        for (double c : centers_.centers.values)
            check_finite(c, "center coordinate", epoch);

        return stats;
    }

    const DomainDataset& dataset_;
    const TrainConfig& config_;
    ModelParams params_;
    CenterTable centers_;
    std::size_t start_epoch_;
    BatchIterator iterator_;
    OptimizerState ec_optimizer_;
    OptimizerState disc_optimizer_;
};

}  // namespace

void TrainConfig::validate() const {
    if (stages.empty()) throw ConfigError("schedule: needs at least one stage");
    if (stages.front().start_epoch != 0)
        throw ConfigError("schedule: first stage must start at epoch 0");
    for (std::size_t i = 1; i < stages.size(); ++i)
        if (stages[i].start_epoch <= stages[i - 1].start_epoch)
            throw ConfigError("schedule: stage epochs must be strictly increasing");
    for (const StageWeights& s : stages)
        if (s.alpha < 0.0 || s.beta1 < 0.0 || s.beta2 < 0.0)
            throw ConfigError("schedule: weights must be non-negative");
    if (!(threshold > 0.0) || threshold > 1.0)
        throw ConfigError("threshold must lie in (0, 1]");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
    if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
    if (variant.adversarial && discriminator_hidden.empty())
        throw ConfigError("adversarial training needs discriminator widths");
}

ModelSpec TrainConfig::model_spec(std::size_t input_dim,
                                  std::size_t class_count) const {
    ModelSpec spec;
    spec.encoder.widths.push_back(input_dim);
    for (std::size_t w : encoder_hidden) spec.encoder.widths.push_back(w);
    spec.encoder.widths.push_back(feature_dim);
    spec.classifier.widths = {feature_dim, class_count};
    if (variant.adversarial) {
        spec.discriminator.widths.push_back(feature_dim);
        for (std::size_t w : discriminator_hidden)
            spec.discriminator.widths.push_back(w);
        spec.discriminator.widths.push_back(1);
    }
    return spec;
}

LossWeights train_stage_weights(const TrainConfig& config, std::size_t epoch) {
    const StageWeights* active = &config.stages.front();
    for (const StageWeights& s : config.stages)
        if (s.start_epoch <= epoch) active = &s;
    LossWeights w;
    w.alpha = active->alpha;
    w.beta1 = config.variant.center ? active->beta1 : 0.0;
    w.beta2 = config.variant.conditional ? active->beta2 : 0.0;
    w.threshold = config.threshold;
    return w;
}

TrainResult train(const DomainDataset& dataset, const TrainConfig& config) {
    config.validate();
    ModelParams params = init_params(
        config.model_spec(dataset.input_dim(), dataset.class_count()), config.seed);
    CenterTable centers;
    centers.gamma = config.gamma;
    TrainLoop loop(dataset, config, std::move(params), std::move(centers), 0);
    return loop.run();
}

TrainResult resume(const DomainDataset& dataset, const TrainConfig& config,
                   const std::filesystem::path& checkpoint_path,
                   std::size_t start_epoch) {
    config.validate();
    Checkpoint ckpt = load_checkpoint(checkpoint_path);

    const ModelSpec spec =
        config.model_spec(dataset.input_dim(), dataset.class_count());
    ModelParams expected = init_params(spec, 0);
    auto expect_shape = [&](const Tensor2& got, const Tensor2& want,
                            const std::string& name) {
        if (got.rows != want.rows || got.cols != want.cols)
            throw CompatError("resume: " + name + " is " + got.shape_str() +
                              " in the checkpoint but the config expects " +
                              want.shape_str());
    };
    const auto got_named = ckpt.params.named_tensors();
    const auto want_named = expected.named_tensors();
    if (got_named.size() != want_named.size())
        throw CompatError("resume: checkpoint has " +
                          std::to_string(got_named.size()) +
                          " model tensors but the config expects " +
                          std::to_string(want_named.size()));
    for (std::size_t i = 0; i < got_named.size(); ++i) {
        if (got_named[i].first != want_named[i].first)
            throw CompatError("resume: unexpected tensor " + got_named[i].first +
                              " (expected " + want_named[i].first + ")");
        expect_shape(*got_named[i].second, *want_named[i].second,
                     got_named[i].first);
    }
    if (ckpt.centers.class_count() != dataset.class_count() ||
        ckpt.centers.dim() != config.feature_dim)
        throw CompatError("resume: centers are " + ckpt.centers.centers.shape_str() +
                          " but the config expects " +
                          std::to_string(dataset.class_count()) + "x" +
                          std::to_string(config.feature_dim));

    TrainLoop loop(dataset, config, std::move(ckpt.params),
                   std::move(ckpt.centers), start_epoch);
    return loop.run();
}

nlohmann::ordered_json config_to_json(const TrainConfig& config) {
    nlohmann::ordered_json j;
    j["encoder_hidden"] = config.encoder_hidden;
    j["feature_dim"] = config.feature_dim;
    j["discriminator_hidden"] = config.discriminator_hidden;
    nlohmann::ordered_json stages = nlohmann::ordered_json::array();
    for (const StageWeights& s : config.stages)
        stages.push_back({s.start_epoch, s.alpha, s.beta1, s.beta2});
    j["stages"] = stages;
    j["threshold"] = config.threshold;
    j["gamma"] = config.gamma;
    j["variant"] = {{"adversarial", config.variant.adversarial},
                    {"center", config.variant.center},
                    {"conditional", config.variant.conditional}};
    j["optimizer"] = {
        {"kind", config.optimizer.kind == OptimizerKind::RmsProp ? "rmsprop"
                                                                 : "sgd_momentum"},
        {"learning_rate", config.optimizer.learning_rate},
        {"decay_factor", config.optimizer.decay_factor},
        {"decay_period", config.optimizer.decay_period},
        {"rho", config.optimizer.rho},
        {"epsilon", config.optimizer.epsilon},
        {"momentum", config.optimizer.momentum}};
    j["discriminator_steps"] = config.discriminator_steps;
    j["batch_size"] = config.batch_size;
    j["max_epochs"] = config.max_epochs;
    j["patience"] = config.patience;
    j["min_improvement"] = config.min_improvement;
    j["seed"] = config.seed;
    return j;
}

void write_report_jsonl(const TrainReport& report,
                        const nlohmann::ordered_json& config_echo,
                        std::ostream& out) {
    nlohmann::ordered_json head;
    head["config"] = config_echo;
    head["start_epoch"] = report.start_epoch;
    head["centers_zero_init"] = report.centers_zero_init;
    out << head.dump() << "\n";
    for (const EpochRecord& r : report.epochs) {
        nlohmann::ordered_json j;
        j["epoch"] = r.epoch;
        j["lr"] = r.lr;
        j["alpha"] = r.alpha;
        j["beta1"] = r.beta1;
        j["beta2"] = r.beta2;
        j["loss_disc"] = r.loss_disc;
        j["loss_enc_adv"] = r.loss_enc_adv;
        j["loss_cls"] = r.loss_cls;
        j["loss_center_src"] = r.loss_center_src;
        j["loss_center_tgt"] = r.loss_center_tgt;
        j["loss_total"] = r.loss_total;
        j["phi_kept_fraction"] = r.phi_kept_fraction;
        j["center_drift"] = r.center_drift;
        j["source_test_acc"] = r.source_test_acc;
        j["target_test_acc"] = r.target_test_acc;
        out << j.dump() << "\n";
    }
}

}  // namespace uda
