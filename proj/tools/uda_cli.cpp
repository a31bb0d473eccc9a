// Command-line surface: dataset generation, training, evaluation, the
// ablation and retention studies, embedding export and the gradient
// checker. Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "uda/checkpoint.hpp"
#include "uda/config.hpp"
#include "uda/error.hpp"
#include "uda/eval.hpp"
#include "uda/gradcheck.hpp"
#include "uda/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
};

uda::ConfigFile load_config(const CommonOpts& opts) {
    uda::ConfigFile config = opts.config_path.empty()
                                 ? uda::ConfigFile::parse_string("", "<defaults>")
                                 : uda::ConfigFile::parse_file(opts.config_path);
    for (const std::string& assignment : opts.overrides)
        config.set_override(assignment);
    return config;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path,
                    "Config file (TOML-subset; see README)");
    cmd->add_option("--set", opts.overrides,
                    "Override a config key, e.g. --set train.seed=5")
        ->take_all();
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ',')) {
        if (token.empty()) continue;
        try {
            seeds.push_back(std::stoull(token));
        } catch (const std::exception&) {
            throw uda::ConfigError("cannot parse seed '" + token + "'");
        }
    }
    if (seeds.empty()) throw uda::ConfigError("empty seed list");
    return seeds;
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw uda::IoError("cannot write file: " + path.string());
    out << text;
}

nlohmann::ordered_json echo_with_train(const uda::ConfigFile& config,
                                       const uda::TrainConfig& cfg) {
    nlohmann::ordered_json echo;
    echo["given"] = config.to_json();
    echo["resolved_train"] = uda::config_to_json(cfg);
    return echo;
}

int cmd_gen_data(const CommonOpts& opts, const std::string& out_dir) {
    const uda::ConfigFile config = load_config(opts);
    const uda::DataSpec spec = uda::data_spec_from(config);
    const uda::DomainDataset dataset = uda::build_dataset(spec);
    uda::export_dataset_csv(dataset, out_dir);
    write_text_file(fs::path(out_dir) / "config.json", config.to_json().dump(2) + "\n");
    std::cout << "wrote 4 csv splits + config.json under " << out_dir << "\n";
    return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& out_dir,
              const std::string& resume_path, std::size_t start_epoch) {
    const uda::ConfigFile config = load_config(opts);
    const uda::DataSpec spec = uda::data_spec_from(config);
    uda::TrainConfig cfg = uda::train_config_from(config);
    const uda::DomainDataset dataset = uda::build_dataset(spec);

    uda::TrainResult result =
        resume_path.empty() ? uda::train(dataset, cfg)
                            : uda::resume(dataset, cfg, resume_path, start_epoch);

    fs::create_directories(out_dir);
    const fs::path ckpt_path = fs::path(out_dir) / "checkpoint.ckpt";
    uda::save_checkpoint(result.params, result.centers, ckpt_path);
    const fs::path report_path = fs::path(out_dir) / "report.jsonl";
    std::ofstream report_out(report_path, std::ios::binary);
    if (!report_out)
        throw uda::IoError("cannot write file: " + report_path.string());
    uda::write_report_jsonl(result.report, echo_with_train(config, cfg), report_out);

    const uda::EpochRecord& last = result.report.epochs.back();
    std::cout << "trained " << result.report.epochs.size() << " epochs"
              << (result.report.converged_early ? " (converged)" : "")
              << "; source_test_acc=" << last.source_test_acc
              << " target_test_acc=" << last.target_test_acc << "\n";
    std::cout << "checkpoint: " << ckpt_path.string() << "\n";
    std::cout << "report: " << report_path.string() << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint_path,
             const std::string& out_path) {
    const uda::ConfigFile config = load_config(opts);
    const uda::DataSpec spec = uda::data_spec_from(config);
    const uda::TrainConfig cfg = uda::train_config_from(config);
    const uda::DomainDataset dataset = uda::build_dataset(spec);
    const uda::Checkpoint ckpt = uda::load_checkpoint(checkpoint_path);
    const uda::EvalSummary summary =
        uda::evaluate(ckpt.params, ckpt.centers, dataset, cfg.threshold, cfg.seed);
    nlohmann::ordered_json j;
    j["config"] = config.to_json();
    j["summary"] = summary.to_json();
    const std::string text = j.dump(2) + "\n";
    if (out_path.empty())
        std::cout << text;
    else
        write_text_file(out_path, text);
    return 0;
}

int cmd_ablation(const CommonOpts& opts, const std::string& seeds_text,
                 const std::string& out_dir, bool retention) {
    const uda::ConfigFile config = load_config(opts);
    const uda::DataSpec spec = uda::data_spec_from(config);
    const uda::TrainConfig cfg = uda::train_config_from(config);
    const uda::DomainDataset dataset = uda::build_dataset(spec);
    const std::vector<std::uint64_t> seeds = parse_seeds(seeds_text);

    nlohmann::ordered_json echo = echo_with_train(config, cfg);
    echo["seeds"] = seeds;
    fs::create_directories(out_dir);
    if (retention) {
        const uda::RetentionReport report = uda::source_retention(dataset, cfg, seeds);
        const std::string tsv = uda::retention_tsv(report, echo);
        write_text_file(fs::path(out_dir) / "retention.tsv", tsv);
        write_text_file(fs::path(out_dir) / "retention.json",
                        uda::retention_json(report, echo).dump(2) + "\n");
        std::cout << tsv;
    } else {
        const std::vector<uda::VariantStats> rows =
            uda::run_ablation(dataset, cfg, seeds);
        const std::string tsv = uda::ablation_tsv(rows, echo);
        write_text_file(fs::path(out_dir) / "ablation.tsv", tsv);
        write_text_file(fs::path(out_dir) / "ablation.json",
                        uda::ablation_json(rows, echo).dump(2) + "\n");
        std::cout << tsv;
    }
    return 0;
}

int cmd_export_embeddings(const CommonOpts& opts, const std::string& checkpoint_path,
                          const std::string& out_stem) {
    const uda::ConfigFile config = load_config(opts);
    const uda::DataSpec spec = uda::data_spec_from(config);
    const uda::DomainDataset dataset = uda::build_dataset(spec);
    const uda::Checkpoint ckpt = uda::load_checkpoint(checkpoint_path);
    uda::export_embeddings(ckpt.params, dataset, out_stem);
    write_text_file(out_stem + ".config.json", config.to_json().dump(2) + "\n");
    std::cout << "wrote " << out_stem << ".csv";
    if (ckpt.params.feature_dim() == 2) std::cout << " and " << out_stem << ".svg";
    std::cout << "\n";
    return 0;
}

int cmd_grad_check(std::uint64_t seed, std::size_t draws) {
    const uda::GradCheckReport report = uda::run_gradient_checks(seed, draws);
    for (const uda::GradCheckResult& check : report.checks)
        std::printf("%-28s max_rel_err=%.3e (%zu draws)\n", check.name.c_str(),
                    check.max_rel_err, check.draws);
    std::printf("max_rel_err %.3e\n", report.max_rel_err);
    return report.max_rel_err < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial domain adaptation with center-based alignment"};
    app.require_subcommand(1);

    CommonOpts gen_opts;
    std::string gen_out = "data_out";
    CLI::App* gen = app.add_subcommand("gen-data", "Generate a dataset as CSV");
    add_common(gen, gen_opts);
    gen->add_option("--out", gen_out, "Output directory");

    CommonOpts train_opts;
    std::string train_out = "run_out";
    std::string resume_path;
    std::size_t start_epoch = 0;
    CLI::App* train = app.add_subcommand("train", "Train; write checkpoint + JSONL");
    add_common(train, train_opts);
    train->add_option("--out", train_out, "Output directory");
    train->add_option("--resume", resume_path, "Checkpoint to continue from");
    train->add_option("--start-epoch", start_epoch, "Epoch to resume at");

    CommonOpts eval_opts;
    std::string eval_ckpt, eval_out;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    add_common(eval_cmd, eval_opts);
    eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
    eval_cmd->add_option("--out", eval_out, "Write JSON here instead of stdout");

    CommonOpts abl_opts;
    std::string abl_seeds = "1,2,3,4,5";
    std::string abl_out = "ablation_out";
    CLI::App* ablation =
        app.add_subcommand("ablation", "Train the variant ladder over seeds");
    add_common(ablation, abl_opts);
    ablation->add_option("--seeds", abl_seeds, "Comma-separated seed list");
    ablation->add_option("--out", abl_out, "Output directory");

    CommonOpts ret_opts;
    std::string ret_seeds = "1,2,3,4,5";
    std::string ret_out = "retention_out";
    CLI::App* retention = app.add_subcommand(
        "retention", "Compare source accuracy with and without adaptation");
    add_common(retention, ret_opts);
    retention->add_option("--seeds", ret_seeds, "Comma-separated seed list");
    retention->add_option("--out", ret_out, "Output directory");

    CommonOpts emb_opts;
    std::string emb_ckpt, emb_out = "embeddings";
    CLI::App* embeddings =
        app.add_subcommand("export-embeddings", "Export encoder features");
    add_common(embeddings, emb_opts);
    embeddings->add_option("--checkpoint", emb_ckpt, "Checkpoint path")->required();
    embeddings->add_option("--out", emb_out, "Output stem (writes <stem>.csv)");

    std::uint64_t gc_seed = 12345;
    std::size_t gc_draws = 20;
    CLI::App* grad_check =
        app.add_subcommand("grad-check", "Finite-difference check of all gradients");
    grad_check->add_option("--seed", gc_seed, "RNG seed");
    grad_check->add_option("--draws", gc_draws, "Randomized draws per check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        app.exit(e);
        return 2;
    }

    try {
        if (*gen) return cmd_gen_data(gen_opts, gen_out);
        if (*train) return cmd_train(train_opts, train_out, resume_path, start_epoch);
        if (*eval_cmd) return cmd_eval(eval_opts, eval_ckpt, eval_out);
        if (*ablation) return cmd_ablation(abl_opts, abl_seeds, abl_out, false);
        if (*retention) return cmd_ablation(ret_opts, ret_seeds, ret_out, true);
        if (*embeddings) return cmd_export_embeddings(emb_opts, emb_ckpt, emb_out);
        if (*grad_check) return cmd_grad_check(gc_seed, gc_draws);
    } catch (const uda::ConfigError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const uda::Error& e) {
        std::cerr << "error: runtime: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
