#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "uda/data.hpp"
#include "uda/losses.hpp"
#include "uda/models.hpp"
#include "uda/trainer.hpp"

namespace uda {

struct EvalSummary {
    double source_test_acc = 0.0;
    double target_test_acc = 0.0;
    std::vector<double> per_class_acc;                 // target test
    std::vector<std::vector<std::size_t>> confusion;   // target test, [true][pred]
    // Held-out accuracy of a fresh probe discriminator fit on frozen
    // train-split features (80/20 split); ~0.5 means aligned domains.
    double domain_probe_acc = 0.0;
    // Fraction of target-train rows the confidence filter keeps.
    double phi_kept_fraction = 0.0;

    nlohmann::ordered_json to_json() const;
};

EvalSummary evaluate(const ModelParams& params, const CenterTable& centers,
                     const DomainDataset& dataset, double threshold,
                     std::uint64_t probe_seed);

// The ablation ladder plus the two no-adversary rows the source-retention
// comparison needs.
enum class Variant { SourceOnly, GanOnly, CenterOnly, GanCenter, Full };
const char* variant_name(Variant v);
VariantFlags variant_flags(Variant v);

struct VariantStats {
    Variant variant = Variant::SourceOnly;
    std::vector<std::uint64_t> seeds;
    std::vector<EvalSummary> per_seed;  // empty entries for failed seeds
    bool failed = false;
    std::string failure;
    double target_acc_mean = 0.0, target_acc_std = 0.0;
    double source_acc_mean = 0.0, source_acc_std = 0.0;
};

// Trains SourceOnly, GanOnly, GanCenter and Full per seed (config's own
// variant flags are overridden per row) and aggregates mean and n-1 std.
// A training abort marks that variant failed; the others continue.
std::vector<VariantStats> run_ablation(const DomainDataset& dataset,
                                       const TrainConfig& config,
                                       const std::vector<std::uint64_t>& seeds);

// Source-test accuracy of the adapted/unadapted pairs:
// columns SourceOnly, GanOnly, CenterOnly, GanCenter; gaps are
// adapted - unadapted, signed.
struct RetentionReport {
    std::vector<VariantStats> variants;  // order above
    std::vector<double> gap_plain_per_seed;   // GanOnly - SourceOnly
    std::vector<double> gap_center_per_seed;  // GanCenter - CenterOnly
    double gap_plain_mean = 0.0;
    double gap_center_mean = 0.0;
};
RetentionReport source_retention(const DomainDataset& dataset,
                                 const TrainConfig& config,
                                 const std::vector<std::uint64_t>& seeds);

// Writes <stem>.csv with columns f0..f{d-1},label,domain,split over every
// split (label -1 for target-train rows, which were unlabeled during
// training) and, when the feature dimension is 2, an SVG scatter at
// <stem>.svg (color = class, circle = source, cross = target).
void export_embeddings(const ModelParams& params, const DomainDataset& dataset,
                       const std::filesystem::path& stem);

std::string ablation_tsv(const std::vector<VariantStats>& rows,
                         const nlohmann::ordered_json& config_echo);
nlohmann::ordered_json ablation_json(const std::vector<VariantStats>& rows,
                                     const nlohmann::ordered_json& config_echo);
std::string retention_tsv(const RetentionReport& report,
                          const nlohmann::ordered_json& config_echo);
nlohmann::ordered_json retention_json(const RetentionReport& report,
                                      const nlohmann::ordered_json& config_echo);

}  // namespace uda
