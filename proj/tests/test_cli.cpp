// Exercises the installed command-line surface end to end: exit codes,
// artifact layout, and the machine-parsable error line.

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code;
    std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
    const fs::path dir = fs::temp_directory_path() / "uda_cli_test";
    fs::create_directories(dir);
    const fs::path log = dir / "out.log";
    const std::string command =
        std::string(UDA_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(command.c_str());
    std::ifstream in(log);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return {WEXITSTATUS(status), buffer.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "uda_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const std::string kTinyTask =
    "--set data.per_class=30 --set data.dim=3 --set train.max_epochs=3 "
    "--set model.feature_dim=4 --set model.encoder_hidden=[8]";

}  // namespace

TEST_CASE("missing config file exits 2 with a single-line error") {
    const RunResult r = run_cli("train --config missing.toml");
    CHECK(r.exit_code == 2);
    CHECK(r.output.rfind("error: config:", 0) == 0);
    CHECK(r.output.find('\n') == r.output.size() - 1);  // exactly one line
}

TEST_CASE("unknown flags and missing subcommands exit 2") {
    CHECK(run_cli("train --no-such-flag").exit_code == 2);
    CHECK(run_cli("").exit_code == 2);
    CHECK(run_cli("not-a-command").exit_code == 2);
}

TEST_CASE("malformed config values exit 2") {
    const RunResult r = run_cli("train --set train.batch_size=zero");
    CHECK(r.exit_code == 2);
    CHECK(r.output.rfind("error: config:", 0) == 0);
}

TEST_CASE("help exits 0") {
    CHECK(run_cli("--help").exit_code == 0);
    CHECK(run_cli("train --help").exit_code == 0);
}

TEST_CASE("gen-data writes the four splits and the config echo") {
    const fs::path out = scratch("gen");
    const RunResult r = run_cli("gen-data --set data.per_class=10 --set data.dim=3 --out " +
                                out.string());
    CHECK(r.exit_code == 0);
    for (const char* name : {"source_train.csv", "source_test.csv",
                             "target_train.csv", "target_test.csv", "config.json"})
        CHECK(fs::exists(out / name));
}

TEST_CASE("train then eval then export-embeddings round-trips") {
    const fs::path out = scratch("train");
    const RunResult train = run_cli("train " + kTinyTask + " --out " + out.string());
    CHECK(train.exit_code == 0);
    REQUIRE(fs::exists(out / "checkpoint.ckpt"));
    REQUIRE(fs::exists(out / "report.jsonl"));

    const RunResult eval = run_cli("eval " + kTinyTask + " --checkpoint " +
                                   (out / "checkpoint.ckpt").string());
    CHECK(eval.exit_code == 0);
    CHECK(eval.output.find("target_test_acc") != std::string::npos);

    const fs::path stem = out / "embeddings";
    const RunResult exp = run_cli("export-embeddings " + kTinyTask +
                                  " --checkpoint " + (out / "checkpoint.ckpt").string() +
                                  " --out " + stem.string());
    CHECK(exp.exit_code == 0);
    CHECK(fs::exists(stem.string() + ".csv"));
}

TEST_CASE("eval with a corrupt checkpoint exits 1 with a runtime error") {
    const fs::path out = scratch("corrupt");
    const fs::path bad = out / "bad.ckpt";
    std::ofstream(bad) << "not a checkpoint";
    const RunResult r = run_cli("eval --checkpoint " + bad.string());
    CHECK(r.exit_code == 1);
    CHECK(r.output.rfind("error: runtime:", 0) == 0);
}

TEST_CASE("ablation emits 4 variants x given seeds, reproducibly") {
    const fs::path out1 = scratch("abl1");
    const fs::path out2 = scratch("abl2");
    const std::string args = "ablation " + kTinyTask + " --seeds 1,2";
    CHECK(run_cli(args + " --out " + out1.string()).exit_code == 0);
    CHECK(run_cli(args + " --out " + out2.string()).exit_code == 0);

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream buffer;
        buffer << in.rdbuf();
        return buffer.str();
    };
    const std::string tsv1 = slurp(out1 / "ablation.tsv");
    CHECK(tsv1 == slurp(out2 / "ablation.tsv"));

    std::size_t variant_rows = 0;
    std::istringstream lines(tsv1);
    std::string line;
    while (std::getline(lines, line))
        if (!line.empty() && line[0] != '#' && line.rfind("variant", 0) != 0)
            ++variant_rows;
    CHECK(variant_rows == 4);
    // per-seed column carries one accuracy per seed
    CHECK(tsv1.find(',') != std::string::npos);
}

TEST_CASE("retention emits the four model rows and both gap lines") {
    const fs::path out = scratch("ret");
    const RunResult r =
        run_cli("retention " + kTinyTask + " --seeds 1,2 --out " + out.string());
    CHECK(r.exit_code == 0);
    std::ifstream in(out / "retention.tsv");
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string tsv = buffer.str();
    for (const char* row : {"SourceOnly", "GanOnly", "CenterOnly", "GanCenter",
                            "gap_plain", "gap_center"})
        CHECK(tsv.find(row) != std::string::npos);
    CHECK(fs::exists(out / "retention.json"));
}

TEST_CASE("grad-check prints the max error and exits 0") {
    const RunResult r = run_cli("grad-check --draws 3");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("max_rel_err") != std::string::npos);
}

TEST_CASE("train resume exits 0 and continues the epoch range") {
    const fs::path out = scratch("resume");
    CHECK(run_cli("train " + kTinyTask + " --out " + out.string()).exit_code == 0);
    const fs::path resumed = scratch("resume2");
    const RunResult r = run_cli("train " + kTinyTask + " --set train.max_epochs=5 " +
                                "--resume " + (out / "checkpoint.ckpt").string() +
                                " --start-epoch 3 --out " + resumed.string());
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("trained 2 epochs") != std::string::npos);
}
