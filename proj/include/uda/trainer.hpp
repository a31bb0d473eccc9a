#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include <json.hpp>

#include "uda/data.hpp"
#include "uda/losses.hpp"
#include "uda/models.hpp"
#include "uda/optim.hpp"

namespace uda {

// One stage of the progressive weight schedule.
struct StageWeights {
    std::size_t start_epoch = 0;
    double alpha = 10.0;
    double beta1 = 0.0;
    double beta2 = 0.0;
};

// Which loss terms a model variant trains with. The discriminator is not
// constructed at all when adversarial is off.
struct VariantFlags {
    bool adversarial = true;
    bool center = true;
    bool conditional = true;
};

struct TrainConfig {
    // model widths (input dim and class count come from the dataset)
    std::vector<std::size_t> encoder_hidden = {32};
    std::size_t feature_dim = 16;
    // Two hidden layers, kept narrow: a wide discriminator overpowers the
    // desk-scale min-max game and locks clusters into wrong matchings.
    std::vector<std::size_t> discriminator_hidden = {8, 8};

    // objective
    std::vector<StageWeights> stages = {{0, 10.0, 0.001, 0.0},
                                        {30, 10.0, 0.002, 0.002},
                                        {60, 10.0, 0.02, 0.02}};
    double threshold = 0.99;
    double gamma = 0.5;
    VariantFlags variant;

    // optimization
    OptimizerSettings optimizer;
    std::size_t discriminator_steps = 1;  // D updates per E/C update

    // loop control
    std::size_t batch_size = 64;
    std::size_t max_epochs = 90;
    std::size_t patience = 10;
    double min_improvement = 1e-4;
    std::uint64_t seed = 1;

    void validate() const;
    ModelSpec model_spec(std::size_t input_dim, std::size_t class_count) const;
};

// Weights of the unique schedule stage containing `epoch`, masked by the
// variant flags (a disabled term trains with weight zero).
LossWeights train_stage_weights(const TrainConfig& config, std::size_t epoch);

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double alpha = 0.0, beta1 = 0.0, beta2 = 0.0;
    // epoch means over batches; 0 for terms the variant does not train
    double loss_disc = 0.0;
    double loss_enc_adv = 0.0;
    double loss_cls = 0.0;
    double loss_center_src = 0.0;
    double loss_center_tgt = 0.0;
    double loss_total = 0.0;
    double phi_kept_fraction = 0.0;
    // mean L2 movement of the class centers over the epoch
    double center_drift = 0.0;
    double source_test_acc = 0.0;
    double target_test_acc = 0.0;
    // kept in memory only; excluded from the JSONL stream so identical
    // runs emit identical bytes
    double wall_ms = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::vector<int> centers_zero_init;
    bool converged_early = false;
    std::size_t start_epoch = 0;
};

struct TrainResult {
    ModelParams params;
    CenterTable centers;
    TrainReport report;
};

// The alternating loop. Per batch: (1) encode both domains; (2) when
// adversarial, step the discriminator on detached features; (3) fresh
// forward, step encoder+classifier on enc_adv + alpha*L_s + beta1*L_cs +
// beta2*L_ct with the discriminator frozen; (4) update centers from the
// detached source features. Centers initialize from the very first batch.
// Aborts with NumericError naming the term and epoch on any non-finite
// loss. Stops early when the epoch-mean encoder/classifier loss improves
// by less than min_improvement for `patience` consecutive epochs.
TrainResult train(const DomainDataset& dataset, const TrainConfig& config);

// Continues from a checkpoint at start_epoch: schedule and lr decay are
// evaluated at the absolute epoch and the PRNG is reseeded with
// seed + start_epoch (deterministic, but not byte-identical to an
// uninterrupted run). Optimizer accumulators restart at zero.
TrainResult resume(const DomainDataset& dataset, const TrainConfig& config,
                   const std::filesystem::path& checkpoint_path,
                   std::size_t start_epoch);

nlohmann::ordered_json config_to_json(const TrainConfig& config);

// JSONL stream: first line {"config": ...}, then one object per epoch
// with stable field names (no timing fields).
void write_report_jsonl(const TrainReport& report,
                        const nlohmann::ordered_json& config_echo,
                        std::ostream& out);

}  // namespace uda
