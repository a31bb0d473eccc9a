#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "uda/rng.hpp"
#include "uda/tensor.hpp"

namespace uda {

struct LabeledSet {
    Tensor2 features;
    std::vector<int> labels;
};

// Paired source (labeled) and target (unlabeled) stores. Target-train
// labels exist only for evaluation: the accessor counts its reads so the
// guard test can assert the training path never touches them.
class DomainDataset {
public:
    DomainDataset() = default;
    DomainDataset(LabeledSet source_train, LabeledSet source_test,
                  Tensor2 target_train_features,
                  std::vector<int> target_train_labels, LabeledSet target_test,
                  std::size_t class_count);

    const LabeledSet& source_train() const { return source_train_; }
    const LabeledSet& source_test() const { return source_test_; }
    const Tensor2& target_train_features() const { return target_train_features_; }
    const LabeledSet& target_test() const { return target_test_; }

    // Evaluation-only. Every call is counted.
    const std::vector<int>& target_train_labels_eval_only() const;
    std::size_t target_train_label_reads() const { return label_reads_; }

    std::size_t class_count() const { return class_count_; }
    std::size_t input_dim() const { return source_train_.features.cols; }

    // P1-style subsampling: keeps the first `limit` rows of a seeded
    // shuffle of each train split (0 = keep all).
    void limit_train_sizes(std::size_t source_limit, std::size_t target_limit,
                           std::uint64_t seed);

private:
    LabeledSet source_train_;
    LabeledSet source_test_;
    Tensor2 target_train_features_;
    std::vector<int> target_train_labels_;
    LabeledSet target_test_;
    std::size_t class_count_ = 0;
    mutable std::size_t label_reads_ = 0;
};

// Affine domain shift applied to target draws: y = R(rotation) * (scale*x)
// + translation, rotation acting on the first two coordinates and the
// translation vector zero-padded to the data dimension. noise_sigma is
// generator-specific: blobs add it to target draws after the shift; moons
// use it as the sampling jitter of both domains.
struct ShiftSpec {
    double rotation = 0.0;
    std::vector<double> translation;
    double scale = 1.0;
    double noise_sigma = 0.0;
    void validate() const;
};

// K Gaussian clusters (sigma 0.5 in every coordinate) centered on a
// circle of radius 3 in the first two coordinates, zero elsewhere.
// Per class and domain: n_per_class train rows and max(1, n_per_class/5)
// test rows. Pure function of (spec, seed).
DomainDataset gen_blobs(std::size_t class_count, std::size_t n_per_class,
                        std::size_t dim, const ShiftSpec& shift,
                        std::uint64_t seed);

// Two interleaved unit half-circles (class 1 centered at (1, 0.5), lower
// half), jittered by noise_sigma in both domains; n train rows per domain,
// max(10, n/5) test rows. Pure function of (spec, seed).
DomainDataset gen_two_moons(std::size_t n, const ShiftSpec& shift,
                            std::uint64_t seed);

// IDX (MNIST-family) ingestion: big-endian magic 0x00000803 for images,
// 0x00000801 for labels. Pixels scale to [0,1]; optional average-pool
// downsampling to s x s (image sides must divide evenly).
std::pair<Tensor2, std::vector<int>> load_idx(
    const std::filesystem::path& images_path,
    const std::filesystem::path& labels_path,
    std::optional<std::size_t> downsample_to = std::nullopt);

// Per-column standardization with statistics from stats_from (always the
// source train split: target statistics must not leak). Columns whose
// std is zero pass through unchanged.
Tensor2 normalize(const Tensor2& features, const Tensor2& stats_from);

// Writes source_train.csv, source_test.csv, target_train.csv and
// target_test.csv under dir, each with header f0..f{d-1},label,domain.
void export_dataset_csv(const DomainDataset& dataset,
                        const std::filesystem::path& dir);

// Lockstep mini-batch iteration. Epochs are driven by the source split:
// next() yields batches until the source permutation is exhausted, the
// target sub-batch matching the source sub-batch size. Each domain is
// reshuffled independently at its own epoch boundary from the one seeded
// generator; when the splits have equal sizes the cycles coincide and
// every sample of both domains appears exactly once per epoch (the last
// partial batch is kept).
class BatchIterator {
public:
    struct Batch {
        Tensor2 source_features;
        std::vector<int> source_labels;
        Tensor2 target_features;
    };

    BatchIterator(const DomainDataset& dataset, std::size_t batch_size,
                  std::uint64_t seed);

    // nullopt signals the end of the epoch (not an error).
    std::optional<Batch> next();
    void start_epoch();
    std::size_t epoch() const { return epoch_; }
    std::size_t steps_per_epoch() const;

private:
    const DomainDataset* dataset_;
    std::size_t batch_size_;
    Rng rng_;
    std::vector<std::size_t> source_order_;
    std::vector<std::size_t> target_order_;
    std::size_t source_cursor_ = 0;
    std::size_t target_cursor_ = 0;
    std::size_t epoch_ = 0;

    void reshuffle_source();
    void reshuffle_target();
};

}  // namespace uda
