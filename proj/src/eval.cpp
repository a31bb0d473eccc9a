#include "uda/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "uda/error.hpp"
#include "uda/rng.hpp"

namespace uda {

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

// Probe discriminator fit on frozen features: one 16-unit hidden layer,
// RMSProp, 40 epochs of mini-batches. Small on purpose; it measures how
// separable the domains remain, not how hard one can overfit them.
constexpr std::size_t kProbeHidden = 16;
constexpr std::size_t kProbeEpochs = 40;
constexpr std::size_t kProbeBatch = 64;

double probe_domain_accuracy(const Tensor2& source_features,
                             const Tensor2& target_features,
                             std::uint64_t probe_seed) {
    const std::size_t d = source_features.cols;
    const std::size_t per_domain =
        std::min(source_features.rows, target_features.rows);
    if (per_domain < 5) throw DataError("domain probe: too few feature rows");

    // Interleave, shuffle, 80/20 split.
    Rng rng(probe_seed);
    std::vector<std::size_t> order(2 * per_domain);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);

    Tensor2 all(2 * per_domain, d);
    std::vector<int> domain(2 * per_domain);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const std::size_t idx = order[i];
        const bool is_source = idx < per_domain;
        const Tensor2& from = is_source ? source_features : target_features;
        const std::size_t r = is_source ? idx : idx - per_domain;
        for (std::size_t j = 0; j < d; ++j) all.at(i, j) = from.at(r, j);
        domain[i] = is_source ? 1 : 0;
    }
    const std::size_t train_n = (all.rows * 8) / 10;
    const std::size_t held_n = all.rows - train_n;

    MlpSpec probe_spec;
    probe_spec.widths = {d, kProbeHidden, 1};
    Mlp probe = init_mlp_params(probe_spec, probe_seed);
    std::vector<ParamRef> refs = mlp_param_refs(probe, "probe");

    OptimizerSettings opt;
    opt.kind = OptimizerKind::RmsProp;
    opt.learning_rate = 1e-3;
    opt.decay_period = 0;  // no decay over this short fit
    OptimizerState state(opt, refs);

    for (std::size_t epoch = 0; epoch < kProbeEpochs; ++epoch) {
        for (std::size_t begin = 0; begin < train_n; begin += kProbeBatch) {
            const std::size_t take = std::min(kProbeBatch, train_n - begin);
            Tensor2 x(take, d);
            std::vector<int> y(take);
            for (std::size_t i = 0; i < take; ++i) {
                for (std::size_t j = 0; j < d; ++j)
                    x.at(i, j) = all.at(begin + i, j);
                y[i] = domain[begin + i];
            }
            Tape tape;
            Var input = tape.constant(std::move(x));
            Var logits = mlp_forward(tape, probe, input, true);
            Var loss = bce_with_logits(tape, logits, y);
            tape.backward(loss);
            state.step(refs, 0);
        }
    }

    Tensor2 held(held_n, d);
    for (std::size_t i = 0; i < held_n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            held.at(i, j) = all.at(train_n + i, j);
    const Tensor2 logits = mlp_forward_value(probe, held);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < held_n; ++i) {
        const int predicted = logits.at(i, 0) > 0.0 ? 1 : 0;
        if (predicted == domain[train_n + i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(held_n);
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    if (xs.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace

nlohmann::ordered_json EvalSummary::to_json() const {
    nlohmann::ordered_json j;
    j["source_test_acc"] = source_test_acc;
    j["target_test_acc"] = target_test_acc;
    j["per_class_acc"] = per_class_acc;
    j["confusion"] = confusion;
    j["domain_probe_acc"] = domain_probe_acc;
    j["phi_kept_fraction"] = phi_kept_fraction;
    return j;
}

EvalSummary evaluate(const ModelParams& params, const CenterTable& centers,
                     const DomainDataset& dataset, double threshold,
                     std::uint64_t probe_seed) {
    (void)centers;
    if (dataset.source_test().features.rows == 0 ||
        dataset.target_test().features.rows == 0)
        throw DataError("evaluate: empty test split");

    EvalSummary summary;
    const std::size_t k = dataset.class_count();

    {
        const LabeledSet& s = dataset.source_test();
        const std::vector<int> pred =
            argmax_rows(classify_value(params, encode_value(params, s.features)));
        std::size_t hits = 0;
        for (std::size_t i = 0; i < pred.size(); ++i)
            if (pred[i] == s.labels[i]) ++hits;
        summary.source_test_acc =
            static_cast<double>(hits) / static_cast<double>(pred.size());
    }

    {
        const LabeledSet& t = dataset.target_test();
        const std::vector<int> pred =
            argmax_rows(classify_value(params, encode_value(params, t.features)));
        summary.confusion.assign(k, std::vector<std::size_t>(k, 0));
        for (std::size_t i = 0; i < pred.size(); ++i)
            ++summary.confusion[static_cast<std::size_t>(t.labels[i])]
                               [static_cast<std::size_t>(pred[i])];
        std::size_t hits = 0;
        summary.per_class_acc.assign(k, 0.0);
        for (std::size_t c = 0; c < k; ++c) {
            const std::size_t row_total = std::accumulate(
                summary.confusion[c].begin(), summary.confusion[c].end(),
                std::size_t{0});
            hits += summary.confusion[c][c];
            summary.per_class_acc[c] =
                row_total == 0 ? 0.0
                               : static_cast<double>(summary.confusion[c][c]) /
                                     static_cast<double>(row_total);
        }
        summary.target_test_acc =
            static_cast<double>(hits) / static_cast<double>(pred.size());
    }

    summary.domain_probe_acc = probe_domain_accuracy(
        encode_value(params, dataset.source_train().features),
        encode_value(params, dataset.target_train_features()), probe_seed);

    const Tensor2 target_probs = softmax_rows(classify_value(
        params, encode_value(params, dataset.target_train_features())));
    summary.phi_kept_fraction =
        filter_target(target_probs, threshold).kept_fraction();
    return summary;
}

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::SourceOnly: return "SourceOnly";
        case Variant::GanOnly: return "GanOnly";
        case Variant::CenterOnly: return "CenterOnly";
        case Variant::GanCenter: return "GanCenter";
        case Variant::Full: return "Full";
    }
    return "?";
}

VariantFlags variant_flags(Variant v) {
    switch (v) {
        case Variant::SourceOnly: return {false, false, false};
        case Variant::GanOnly: return {true, false, false};
        case Variant::CenterOnly: return {false, true, false};
        case Variant::GanCenter: return {true, true, false};
        case Variant::Full: return {true, true, true};
    }
    return {};
}

namespace {

VariantStats run_variant(Variant v, const DomainDataset& dataset,
                         const TrainConfig& base,
                         const std::vector<std::uint64_t>& seeds) {
    VariantStats stats;
    stats.variant = v;
    stats.seeds = seeds;
    std::vector<double> target_accs, source_accs;
    for (std::uint64_t seed : seeds) {
        TrainConfig cfg = base;
        cfg.variant = variant_flags(v);
        cfg.seed = seed;
        try {
            TrainResult result = train(dataset, cfg);
            EvalSummary summary = evaluate(result.params, result.centers, dataset,
                                           cfg.threshold, seed);
            target_accs.push_back(summary.target_test_acc);
            source_accs.push_back(summary.source_test_acc);
            stats.per_seed.push_back(std::move(summary));
        } catch (const Error& e) {
            stats.failed = true;
            stats.failure = e.what();
        }
    }
    if (!target_accs.empty()) {
        std::tie(stats.target_acc_mean, stats.target_acc_std) = mean_std(target_accs);
        std::tie(stats.source_acc_mean, stats.source_acc_std) = mean_std(source_accs);
    }
    return stats;
}

}  // namespace

std::vector<VariantStats> run_ablation(const DomainDataset& dataset,
                                       const TrainConfig& config,
                                       const std::vector<std::uint64_t>& seeds) {
    if (seeds.size() < 2)
        throw ConfigError("ablation: need at least 2 seeds for mean/std");
    std::vector<VariantStats> rows;
    for (Variant v :
         {Variant::SourceOnly, Variant::GanOnly, Variant::GanCenter, Variant::Full})
        rows.push_back(run_variant(v, dataset, config, seeds));
    return rows;
}

RetentionReport source_retention(const DomainDataset& dataset,
                                 const TrainConfig& config,
                                 const std::vector<std::uint64_t>& seeds) {
    if (seeds.size() < 2)
        throw ConfigError("retention: need at least 2 seeds for mean/std");
    RetentionReport report;
    for (Variant v : {Variant::SourceOnly, Variant::GanOnly, Variant::CenterOnly,
                      Variant::GanCenter})
        report.variants.push_back(run_variant(v, dataset, config, seeds));

    const VariantStats& plain = report.variants[0];
    const VariantStats& gan = report.variants[1];
    const VariantStats& center = report.variants[2];
    const VariantStats& gan_center = report.variants[3];
    if (!plain.failed && !gan.failed && !center.failed && !gan_center.failed) {
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            report.gap_plain_per_seed.push_back(gan.per_seed[i].source_test_acc -
                                                plain.per_seed[i].source_test_acc);
            report.gap_center_per_seed.push_back(
                gan_center.per_seed[i].source_test_acc -
                center.per_seed[i].source_test_acc);
        }
        report.gap_plain_mean = mean_std(report.gap_plain_per_seed).first;
        report.gap_center_mean = mean_std(report.gap_center_per_seed).first;
    }
    return report;
}

namespace {

const char* kPalette[10] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                            "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                            "#bcbd22", "#17becf"};

struct EmbeddingRow {
    std::vector<double> f;
    int label;
    char domain;
    const char* split;
};

void write_svg(const std::vector<EmbeddingRow>& rows,
               const std::filesystem::path& path) {
    double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
    for (const EmbeddingRow& r : rows) {
        min_x = std::min(min_x, r.f[0]);
        max_x = std::max(max_x, r.f[0]);
        min_y = std::min(min_y, r.f[1]);
        max_y = std::max(max_y, r.f[1]);
    }
    const double pad_x = 0.05 * std::max(max_x - min_x, 1e-9);
    const double pad_y = 0.05 * std::max(max_y - min_y, 1e-9);
    min_x -= pad_x; max_x += pad_x;
    min_y -= pad_y; max_y += pad_y;
    constexpr double kSide = 640.0;
    auto sx = [&](double x) { return kSide * (x - min_x) / (max_x - min_x); };
    auto sy = [&](double y) { return kSide * (max_y - y) / (max_y - min_y); };

    std::ofstream out(path);
    if (!out) throw IoError("cannot write file: " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" "
           "viewBox=\"0 0 640 640\">\n";
    out << "<rect width=\"640\" height=\"640\" fill=\"white\"/>\n";
    for (const EmbeddingRow& r : rows) {
        const char* color =
            r.label < 0 ? "#999999" : kPalette[static_cast<std::size_t>(r.label) % 10];
        const double x = sx(r.f[0]);
        const double y = sy(r.f[1]);
        if (r.domain == 'S') {
            out << "<circle cx=\"" << fmt(x, "%.2f") << "\" cy=\"" << fmt(y, "%.2f")
                << "\" r=\"3\" fill=\"" << color << "\" fill-opacity=\"0.7\"/>\n";
        } else {
            out << "<path d=\"M" << fmt(x - 3, "%.2f") << " " << fmt(y - 3, "%.2f")
                << " L" << fmt(x + 3, "%.2f") << " " << fmt(y + 3, "%.2f") << " M"
                << fmt(x - 3, "%.2f") << " " << fmt(y + 3, "%.2f") << " L"
                << fmt(x + 3, "%.2f") << " " << fmt(y - 3, "%.2f") << "\" stroke=\""
                << color << "\" stroke-width=\"1.2\" stroke-opacity=\"0.7\"/>\n";
        }
    }
    out << "</svg>\n";
}

}  // namespace

void export_embeddings(const ModelParams& params, const DomainDataset& dataset,
                       const std::filesystem::path& stem) {
    std::vector<EmbeddingRow> rows;
    auto add_split = [&](const Tensor2& inputs, const std::vector<int>* labels,
                         char domain, const char* split) {
        const Tensor2 feats = encode_value(params, inputs);
        for (std::size_t i = 0; i < feats.rows; ++i) {
            EmbeddingRow r;
            r.f.assign(feats.row(i).begin(), feats.row(i).end());
            r.label = labels ? (*labels)[i] : -1;
            r.domain = domain;
            r.split = split;
            rows.push_back(std::move(r));
        }
    };
    add_split(dataset.source_train().features, &dataset.source_train().labels, 'S',
              "train");
    add_split(dataset.source_test().features, &dataset.source_test().labels, 'S',
              "test");
    add_split(dataset.target_train_features(), nullptr, 'T', "train");
    add_split(dataset.target_test().features, &dataset.target_test().labels, 'T',
              "test");

    const std::size_t d = params.feature_dim();
    std::filesystem::path csv_path = stem;
    csv_path += ".csv";
    if (stem.has_parent_path())
        std::filesystem::create_directories(stem.parent_path());
    std::ofstream out(csv_path);
    if (!out) throw IoError("cannot write file: " + csv_path.string());
    for (std::size_t j = 0; j < d; ++j) out << "f" << j << ",";
    out << "label,domain,split\n";
    for (const EmbeddingRow& r : rows) {
        for (double v : r.f) out << fmt(v, "%.17g") << ",";
        out << r.label << "," << r.domain << "," << r.split << "\n";
    }
    out.close();

    if (d == 2) {
        std::filesystem::path svg_path = stem;
        svg_path += ".svg";
        write_svg(rows, svg_path);
    }
}

std::string ablation_tsv(const std::vector<VariantStats>& rows,
                         const nlohmann::ordered_json& config_echo) {
    std::ostringstream out;
    out << "# config=" << config_echo.dump() << "\n";
    out << "variant\ttarget_acc_mean\ttarget_acc_std\tsource_acc_mean\t"
           "source_acc_std\tper_seed_target_acc\n";
    for (const VariantStats& row : rows) {
        out << variant_name(row.variant) << "\t";
        if (row.failed && row.per_seed.empty()) {
            out << "failed\tfailed\tfailed\tfailed\t" << row.failure << "\n";
            continue;
        }
        out << fmt(row.target_acc_mean) << "\t" << fmt(row.target_acc_std) << "\t"
            << fmt(row.source_acc_mean) << "\t" << fmt(row.source_acc_std) << "\t";
        for (std::size_t i = 0; i < row.per_seed.size(); ++i) {
            if (i) out << ",";
            out << fmt(row.per_seed[i].target_test_acc);
        }
        out << "\n";
    }
    return out.str();
}

nlohmann::ordered_json ablation_json(const std::vector<VariantStats>& rows,
                                     const nlohmann::ordered_json& config_echo) {
    nlohmann::ordered_json j;
    j["config"] = config_echo;
    nlohmann::ordered_json out_rows = nlohmann::ordered_json::array();
    for (const VariantStats& row : rows) {
        nlohmann::ordered_json r;
        r["variant"] = variant_name(row.variant);
        r["seeds"] = row.seeds;
        r["failed"] = row.failed;
        if (row.failed) r["failure"] = row.failure;
        r["target_acc_mean"] = row.target_acc_mean;
        r["target_acc_std"] = row.target_acc_std;
        r["source_acc_mean"] = row.source_acc_mean;
        r["source_acc_std"] = row.source_acc_std;
        nlohmann::ordered_json per_seed = nlohmann::ordered_json::array();
        for (const EvalSummary& s : row.per_seed) per_seed.push_back(s.to_json());
        r["per_seed"] = per_seed;
        out_rows.push_back(r);
    }
    j["variants"] = out_rows;
    return j;
}

std::string retention_tsv(const RetentionReport& report,
                          const nlohmann::ordered_json& config_echo) {
    std::ostringstream out;
    out << "# config=" << config_echo.dump() << "\n";
    out << "model\tsource_acc_mean\tsource_acc_std\tper_seed_source_acc\n";
    for (const VariantStats& row : report.variants) {
        out << variant_name(row.variant) << "\t";
        if (row.failed && row.per_seed.empty()) {
            out << "failed\tfailed\t" << row.failure << "\n";
            continue;
        }
        out << fmt(row.source_acc_mean) << "\t" << fmt(row.source_acc_std) << "\t";
        for (std::size_t i = 0; i < row.per_seed.size(); ++i) {
            if (i) out << ",";
            out << fmt(row.per_seed[i].source_test_acc);
        }
        out << "\n";
    }
    out << "gap_plain\t" << fmt(report.gap_plain_mean) << "\t\t";
    for (std::size_t i = 0; i < report.gap_plain_per_seed.size(); ++i) {
        if (i) out << ",";
        out << fmt(report.gap_plain_per_seed[i]);
    }
    out << "\n";
    out << "gap_center\t" << fmt(report.gap_center_mean) << "\t\t";
    for (std::size_t i = 0; i < report.gap_center_per_seed.size(); ++i) {
        if (i) out << ",";
        out << fmt(report.gap_center_per_seed[i]);
    }
    out << "\n";
    return out.str();
}

nlohmann::ordered_json retention_json(const RetentionReport& report,
                                      const nlohmann::ordered_json& config_echo) {
    nlohmann::ordered_json j;
    j["config"] = config_echo;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const VariantStats& row : report.variants) {
        nlohmann::ordered_json r;
        r["variant"] = variant_name(row.variant);
        r["failed"] = row.failed;
        r["source_acc_mean"] = row.source_acc_mean;
        r["source_acc_std"] = row.source_acc_std;
        nlohmann::ordered_json per_seed = nlohmann::ordered_json::array();
        for (const EvalSummary& s : row.per_seed)
            per_seed.push_back(s.source_test_acc);
        r["per_seed_source_acc"] = per_seed;
        rows.push_back(r);
    }
    j["models"] = rows;
    j["gap_plain_per_seed"] = report.gap_plain_per_seed;
    j["gap_center_per_seed"] = report.gap_center_per_seed;
    j["gap_plain_mean"] = report.gap_plain_mean;
    j["gap_center_mean"] = report.gap_center_mean;
    return j;
}

}  // namespace uda
