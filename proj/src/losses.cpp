#include "uda/losses.hpp"

#include <string>

#include "uda/error.hpp"

namespace uda {

void LossWeights::validate() const {
    if (alpha < 0.0 || beta1 < 0.0 || beta2 < 0.0)
        throw ConfigError("loss weights must be non-negative");
    if (!(threshold > 0.0) || threshold > 1.0)
        throw ConfigError("threshold must lie in (0, 1], got " +
                          std::to_string(threshold));
}

AdversarialLosses adversarial_losses(Tape& t, Var d_logits_source,
                                     Var d_logits_target) {
    const Tensor2& src = t.value(d_logits_source);
    const Tensor2& tgt = t.value(d_logits_target);
    if (src.rows == 0 || tgt.rows == 0)
        throw DataError("adversarial_losses: empty batch");
    if (src.cols != 1 || tgt.cols != 1)
        throw DimensionError("adversarial_losses: expected nx1 logits, got " +
                             src.shape_str() + " and " + tgt.shape_str());
    const std::vector<int> ones_src(src.rows, 1);
    const std::vector<int> zeros_tgt(tgt.rows, 0);
    const std::vector<int> ones_tgt(tgt.rows, 1);

    // Mean over the union batch, assembled from the two per-domain means.
    const double ns = static_cast<double>(src.rows);
    const double nt = static_cast<double>(tgt.rows);
    Var src_term = bce_with_logits(t, d_logits_source, ones_src);
    Var tgt_term = bce_with_logits(t, d_logits_target, zeros_tgt);
    Var disc = scale(t, add(t, scale(t, src_term, ns), scale(t, tgt_term, nt)),
                     1.0 / (ns + nt));

    Var enc = bce_with_logits(t, d_logits_target, ones_tgt);
    return {disc, enc};
}

Var source_classification_loss(Tape& t, Var logits, const std::vector<int>& labels) {
    return softmax_cross_entropy(t, logits, labels).loss;
}

namespace {

void check_labels(const std::vector<int>& labels, std::size_t class_count,
                  const char* where) {
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count)
            throw LabelError(std::string(where) + ": label " +
                             std::to_string(labels[i]) + " out of range [0," +
                             std::to_string(class_count) + ") at row " +
                             std::to_string(i));
}

}  // namespace

CenterTable init_centers(const Tensor2& features, const std::vector<int>& labels,
                         std::size_t class_count, double gamma) {
    if (class_count == 0) throw SpecError("init_centers: zero classes");
    if (features.rows == 0) throw DataError("init_centers: empty batch");
    if (labels.size() != features.rows)
        throw DimensionError("init_centers: " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(features.rows) +
                             " rows");
    check_labels(labels, class_count, "init_centers");

    CenterTable table;
    table.centers = Tensor2(class_count, features.cols);
    table.gamma = gamma;
    std::vector<std::size_t> counts(class_count, 0);
    for (std::size_t i = 0; i < features.rows; ++i) {
        const std::size_t k = static_cast<std::size_t>(labels[i]);
        ++counts[k];
        for (std::size_t j = 0; j < features.cols; ++j)
            table.centers.at(k, j) += features.at(i, j);
    }
    for (std::size_t k = 0; k < class_count; ++k) {
        if (counts[k] == 0) {
            table.zero_init_classes.push_back(static_cast<int>(k));
            continue;
        }
        for (std::size_t j = 0; j < features.cols; ++j)
            table.centers.at(k, j) /= static_cast<double>(counts[k]);
    }
    table.initialized = true;
    return table;
}

void update_centers(CenterTable& table, const Tensor2& features,
                    const std::vector<int>& labels) {
    if (!table.initialized)
        throw StateError("update_centers: centers not initialized");
    if (features.cols != table.dim())
        throw DimensionError("update_centers: features " + features.shape_str() +
                             " vs centers " + table.centers.shape_str());
    if (labels.size() != features.rows)
        throw DimensionError("update_centers: " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(features.rows) +
                             " rows");
    check_labels(labels, table.class_count(), "update_centers");

    const std::size_t k_total = table.class_count();
    const std::size_t d = table.dim();
    std::vector<double> pull(k_total * d, 0.0);
    std::vector<std::size_t> counts(k_total, 0);
    for (std::size_t i = 0; i < features.rows; ++i) {
        const std::size_t k = static_cast<std::size_t>(labels[i]);
        ++counts[k];
        for (std::size_t j = 0; j < d; ++j)
            pull[k * d + j] += table.centers.at(k, j) - features.at(i, j);
    }
    for (std::size_t k = 0; k < k_total; ++k) {
        if (counts[k] == 0) continue;  // empty sum: center untouched
        const double damp = 1.0 + static_cast<double>(counts[k]);
        for (std::size_t j = 0; j < d; ++j)
            table.centers.at(k, j) -= table.gamma * pull[k * d + j] / damp;
    }
}

Var center_loss_source(Tape& t, Var features, const std::vector<int>& labels,
                       const CenterTable& table) {
    if (!table.initialized)
        throw StateError("center_loss_source: centers not initialized");
    const Tensor2& f = t.value(features);
    if (labels.size() != f.rows)
        throw DimensionError("center_loss_source: " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(f.rows) + " rows");
    check_labels(labels, table.class_count(), "center_loss_source");
    return sum_squared_row_distance(t, features, labels, table.centers);
}

FilteredBatch filter_target(const Tensor2& probabilities, double threshold) {
    if (!(threshold > 0.0) || threshold > 1.0)
        throw ConfigError("filter_target: threshold must lie in (0, 1], got " +
                          std::to_string(threshold));
    FilteredBatch out;
    out.total_rows = probabilities.rows;
    for (std::size_t i = 0; i < probabilities.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < probabilities.cols; ++j)
            if (probabilities.at(i, j) > probabilities.at(i, best)) best = j;
        const double max_prob = probabilities.at(i, best);
        if (max_prob >= threshold) {
            out.kept_rows.push_back(i);
            out.pseudo_labels.push_back(static_cast<int>(best));
            out.max_probabilities.push_back(max_prob);
        }
    }
    return out;
}

Var conditional_loss_target(Tape& t, Var features, const FilteredBatch& filtered,
                            const CenterTable& table) {
    if (!table.initialized)
        throw StateError("conditional_loss_target: centers not initialized");
    return sum_squared_row_distance(t, features, filtered.kept_rows,
                                    filtered.pseudo_labels, table.centers);
}

TotalObjective total_objective(Tape& t, const LossParts& parts,
                               const LossWeights& weights) {
    weights.validate();
    Var total;
    auto add_term = [&](Var term, double coeff) {
        if (!term.valid() || coeff == 0.0) return;
        Var scaled = coeff == 1.0 ? term : scale(t, term, coeff);
        total = total.valid() ? add(t, total, scaled) : scaled;
    };
    add_term(parts.encoder_adv, 1.0);
    add_term(parts.classification, weights.alpha);
    add_term(parts.center_source, weights.beta1);
    add_term(parts.center_target, weights.beta2);
    if (!total.valid()) total = t.constant(Tensor2(1, 1, 0.0));
    return {total, parts.discriminator_adv};
}

}  // namespace uda
