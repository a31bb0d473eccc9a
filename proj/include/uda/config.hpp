#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "uda/data.hpp"
#include "uda/trainer.hpp"

namespace uda {

// Values of the key/value config format: booleans, numbers, quoted
// strings and (possibly nested) arrays.
struct ConfigValue;
using ConfigArray = std::vector<ConfigValue>;
struct ConfigValue {
    std::variant<bool, double, std::string, ConfigArray> data;

    bool is_array() const { return std::holds_alternative<ConfigArray>(data); }
    bool as_bool(const std::string& key) const;
    double as_double(const std::string& key) const;
    std::int64_t as_int(const std::string& key) const;
    std::size_t as_size(const std::string& key) const;
    const std::string& as_string(const std::string& key) const;
    const ConfigArray& as_array(const std::string& key) const;
};

// TOML-subset config file: '#' comments, [section] headers, key = value
// lines. Keys are addressed as "section.key". Unknown keys are rejected
// by the typed builders below, not by the parser.
class ConfigFile {
public:
    static ConfigFile parse_file(const std::filesystem::path& path);
    static ConfigFile parse_string(const std::string& text,
                                   const std::string& origin = "<string>");

    bool has(const std::string& dotted_key) const;
    const ConfigValue& at(const std::string& dotted_key) const;

    // Typed getters with defaults.
    double get_double(const std::string& key, double fallback) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::vector<std::size_t> get_sizes(const std::string& key,
                                       std::vector<std::size_t> fallback) const;
    std::vector<double> get_doubles(const std::string& key,
                                    std::vector<double> fallback) const;

    // Applies a "section.key=value" override (CLI --set).
    void set_override(const std::string& assignment);

    // Canonical echo for provenance stamping of output artifacts.
    nlohmann::ordered_json to_json() const;

private:
    // insertion-ordered (section, key) -> value
    std::vector<std::pair<std::string, ConfigValue>> entries_;
    std::map<std::string, std::size_t> index_;
    void put(const std::string& dotted_key, ConfigValue value);
};

// How to obtain the dataset: a generator spec or IDX paths.
struct DataSpec {
    std::string generator = "blobs";  // blobs | moons | idx
    // blobs/moons
    std::size_t classes = 3;
    std::size_t per_class = 300;  // blobs
    std::size_t samples = 600;    // moons, per domain
    std::size_t dim = 8;
    ShiftSpec shift{0.6, {1.5, 0.0}, 1.0, 0.0};
    std::uint64_t seed = 7;
    // idx
    std::filesystem::path source_train_images, source_train_labels;
    std::filesystem::path source_test_images, source_test_labels;
    std::filesystem::path target_train_images, target_train_labels;
    std::filesystem::path target_test_images, target_test_labels;
    std::size_t downsample_to = 0;  // 0 = keep resolution
    // P1-style subsampling knobs (0 = keep all)
    std::size_t source_limit = 0;
    std::size_t target_limit = 0;
};

DataSpec data_spec_from(const ConfigFile& config);
TrainConfig train_config_from(const ConfigFile& config);
DomainDataset build_dataset(const DataSpec& spec);

}  // namespace uda
