#include <doctest.h>

#include "uda/config.hpp"
#include "uda/error.hpp"

using namespace uda;

TEST_CASE("config parses sections, scalars, strings and arrays") {
    const std::string text = R"(
# a comment
[data]
generator = "moons"
samples = 250
noise_sigma = 0.05          # trailing comment
translation = [1.5, -0.25]

[train]
seed = 9
stages = [[0, 10.0, 0.001, 0.0], [30, 10.0, 0.002, 0.002]]
optimizer = "sgd_momentum"
momentum = 0.8
)";
    const ConfigFile config = ConfigFile::parse_string(text);
    CHECK(config.get_string("data.generator", "") == "moons");
    CHECK(config.get_size("data.samples", 0) == 250);
    CHECK(config.get_double("data.noise_sigma", 0.0) == doctest::Approx(0.05));
    const auto translation = config.get_doubles("data.translation", {});
    CHECK(translation == std::vector<double>{1.5, -0.25});

    const DataSpec spec = data_spec_from(config);
    CHECK(spec.generator == "moons");
    CHECK(spec.samples == 250);

    const TrainConfig cfg = train_config_from(config);
    CHECK(cfg.seed == 9);
    CHECK(cfg.optimizer.kind == OptimizerKind::SgdMomentum);
    CHECK(cfg.optimizer.momentum == doctest::Approx(0.8));
    REQUIRE(cfg.stages.size() == 2);
    CHECK(cfg.stages[1].start_epoch == 30);
    CHECK(cfg.stages[1].beta2 == doctest::Approx(0.002));
}

TEST_CASE("defaults survive an empty config") {
    const ConfigFile config = ConfigFile::parse_string("");
    const TrainConfig cfg = train_config_from(config);
    CHECK(cfg.stages.size() == 3);
    CHECK(cfg.threshold == doctest::Approx(0.99));
    CHECK(cfg.gamma == doctest::Approx(0.5));
    CHECK(cfg.optimizer.kind == OptimizerKind::RmsProp);
    const DataSpec spec = data_spec_from(config);
    CHECK(spec.generator == "blobs");
}

TEST_CASE("overrides replace file values") {
    ConfigFile config = ConfigFile::parse_string("[train]\nseed = 1\n");
    config.set_override("train.seed=42");
    config.set_override("data.generator=\"moons\"");
    config.set_override("model.encoder_hidden=[64, 32]");
    CHECK(train_config_from(config).seed == 42);
    CHECK(data_spec_from(config).generator == "moons");
    CHECK(train_config_from(config).encoder_hidden ==
          std::vector<std::size_t>{64, 32});
}

TEST_CASE("malformed configs are rejected with line context") {
    CHECK_THROWS_AS(ConfigFile::parse_string("[unclosed\nkey = 1"), ConfigError);
    CHECK_THROWS_AS(ConfigFile::parse_string("just a line"), ConfigError);
    CHECK_THROWS_AS(ConfigFile::parse_string("key = [1, 2"), ConfigError);
    CHECK_THROWS_AS(ConfigFile::parse_string("key = \"open"), ConfigError);
    CHECK_THROWS_AS(ConfigFile::parse_string("key = 1.2.3"), ConfigError);
    CHECK_THROWS_WITH_AS(ConfigFile::parse_string("[a]\nx = nope\n"),
                         doctest::Contains(":2"), ConfigError);
    CHECK_THROWS_AS(ConfigFile::parse_file("definitely_missing.toml"), ConfigError);
}

TEST_CASE("typed getters reject wrong types and bad integers") {
    const ConfigFile config =
        ConfigFile::parse_string("[a]\nx = 1.5\ny = \"text\"\nz = true\n");
    CHECK_THROWS_AS(config.at("a.x").as_size("a.x"), ConfigError);
    CHECK_THROWS_AS(config.at("a.y").as_double("a.y"), ConfigError);
    CHECK_THROWS_AS(config.at("a.z").as_array("a.z"), ConfigError);
    CHECK(config.get_bool("a.z", false));
}

TEST_CASE("unknown enum values are rejected") {
    ConfigFile config = ConfigFile::parse_string("[train]\noptimizer = \"adam\"\n");
    CHECK_THROWS_AS(train_config_from(config), ConfigError);
    ConfigFile bad_gen = ConfigFile::parse_string("[data]\ngenerator = \"mnist\"\n");
    CHECK_THROWS_AS(data_spec_from(bad_gen), ConfigError);
    ConfigFile bad_variant =
        ConfigFile::parse_string("[train]\nvariant = \"everything\"\n");
    CHECK_THROWS_AS(train_config_from(bad_variant), ConfigError);
}

TEST_CASE("config echo is deterministic and keeps insertion order") {
    const std::string text = "[b]\nz = 1\na = 2\n[a]\nq = [1, [2, 3]]\n";
    const ConfigFile config = ConfigFile::parse_string(text);
    const std::string once = config.to_json().dump();
    const std::string twice = ConfigFile::parse_string(text).to_json().dump();
    CHECK(once == twice);
    CHECK(once.find("\"b.z\"") < once.find("\"b.a\""));
    CHECK(once.find("\"b.a\"") < once.find("\"a.q\""));
}

TEST_CASE("build_dataset honors generator and subsampling knobs") {
    ConfigFile config = ConfigFile::parse_string(
        "[data]\ngenerator = \"blobs\"\nclasses = 2\nper_class = 30\ndim = 3\n"
        "source_limit = 20\n");
    const DomainDataset data = build_dataset(data_spec_from(config));
    CHECK(data.class_count() == 2);
    CHECK(data.input_dim() == 3);
    CHECK(data.source_train().features.rows == 20);
    CHECK(data.target_train_features().rows == 60);
}
