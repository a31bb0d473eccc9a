#pragma once

#include <vector>

#include "uda/tensor.hpp"

namespace uda {

// Running class centers in feature space. Centers are plain data, never
// tape parameters: they move only through their own damped-mean update
// rule, once per batch, driven by labeled source features.
struct CenterTable {
    Tensor2 centers;  // K x d
    double gamma = 0.5;
    bool initialized = false;
    // Classes absent from the first batch start at the zero vector; kept
    // for the audit trail.
    std::vector<int> zero_init_classes;

    std::size_t class_count() const { return centers.rows; }
    std::size_t dim() const { return centers.cols; }
};

// Scalar weights of the combined objective plus the pseudo-label
// confidence threshold.
struct LossWeights {
    double alpha = 10.0;
    double beta1 = 0.0;
    double beta2 = 0.0;
    double threshold = 0.99;
    void validate() const;
};

// Target rows that survived the confidence filter, with their argmax
// pseudo-labels and the max-probabilities that admitted them.
struct FilteredBatch {
    std::vector<std::size_t> kept_rows;
    std::vector<int> pseudo_labels;
    std::vector<double> max_probabilities;
    std::size_t total_rows = 0;

    double kept_fraction() const {
        return total_rows == 0
                   ? 0.0
                   : static_cast<double>(kept_rows.size()) /
                         static_cast<double>(total_rows);
    }
};

// Both sides of the adversarial game, from discriminator logits on the
// two domains.
//   discriminator: mean BCE over the union batch, labels source=1 target=0
//   encoder:       mean BCE on target logits with label flipped to 1
//                  (non-saturating objective the encoder minimizes to fool D)
struct AdversarialLosses {
    Var discriminator;
    Var encoder;
};
AdversarialLosses adversarial_losses(Tape& t, Var d_logits_source,
                                     Var d_logits_target);

// Mean softmax cross entropy on labeled source logits.
Var source_classification_loss(Tape& t, Var logits, const std::vector<int>& labels);

// Per-class mean of the first batch; classes unseen in that batch start
// at zero and are recorded in zero_init_classes.
CenterTable init_centers(const Tensor2& features, const std::vector<int>& labels,
                         std::size_t class_count, double gamma);

// Damped mean-pull update:
//   delta_k = sum_{i: y_i=k}(c_k - f_i) / (1 + N_k);  c_k <- c_k - gamma*delta_k
// Classes absent from the batch are untouched. Features must be plain
// values (detached); no gradient flows through this update.
void update_centers(CenterTable& table, const Tensor2& features,
                    const std::vector<int>& labels);

// Sum over the batch of ||f_i - c_{y_i}||^2 (a sum, not a mean); gradient
// flows to features only.
Var center_loss_source(Tape& t, Var features, const std::vector<int>& labels,
                       const CenterTable& table);

// Keeps rows whose max probability is >= threshold (boundary included);
// pseudo-label is the row argmax, ties to the lowest class index.
FilteredBatch filter_target(const Tensor2& probabilities, double threshold);

// Sum over kept rows of ||f_i - c_{pseudo_i}||^2; zero when the filter
// kept nothing.
Var conditional_loss_target(Tape& t, Var features, const FilteredBatch& filtered,
                            const CenterTable& table);

// The four loss terms. Invalid Vars mark absent terms (e.g. no
// adversarial pair when training source-only).
struct LossParts {
    Var encoder_adv;
    Var classification;
    Var center_source;
    Var center_target;
    Var discriminator_adv;
};

struct TotalObjective {
    Var encoder_classifier;  // enc_adv + alpha*L_s + beta1*L_cs + beta2*L_ct
    Var discriminator;       // disc_adv, passed through
};

// Weighted combination realizing the two alternating minimizations.
// Zero-weight terms are omitted from the graph, so their gradient
// contribution is exactly zero.
TotalObjective total_objective(Tape& t, const LossParts& parts,
                               const LossWeights& weights);

}  // namespace uda
