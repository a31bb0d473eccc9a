#include "uda/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "uda/error.hpp"

namespace uda {

namespace {

std::string type_name(const ConfigValue& v) {
    switch (v.data.index()) {
        case 0: return "bool";
        case 1: return "number";
        case 2: return "string";
        default: return "array";
    }
}

[[noreturn]] void type_error(const std::string& key, const ConfigValue& v,
                             const char* wanted) {
    throw ConfigError("config: key '" + key + "' is a " + type_name(v) +
                      ", expected " + wanted);
}

}  // namespace

bool ConfigValue::as_bool(const std::string& key) const {
    if (const bool* b = std::get_if<bool>(&data)) return *b;
    type_error(key, *this, "bool");
}

double ConfigValue::as_double(const std::string& key) const {
    if (const double* d = std::get_if<double>(&data)) return *d;
    type_error(key, *this, "number");
}

std::int64_t ConfigValue::as_int(const std::string& key) const {
    const double d = as_double(key);
    const double rounded = std::nearbyint(d);
    if (d != rounded)
        throw ConfigError("config: key '" + key + "' must be an integer, got " +
                          std::to_string(d));
    return static_cast<std::int64_t>(rounded);
}

std::size_t ConfigValue::as_size(const std::string& key) const {
    const std::int64_t i = as_int(key);
    if (i < 0)
        throw ConfigError("config: key '" + key + "' must be non-negative");
    return static_cast<std::size_t>(i);
}

const std::string& ConfigValue::as_string(const std::string& key) const {
    if (const std::string* s = std::get_if<std::string>(&data)) return *s;
    type_error(key, *this, "string");
}

const ConfigArray& ConfigValue::as_array(const std::string& key) const {
    if (const ConfigArray* a = std::get_if<ConfigArray>(&data)) return *a;
    type_error(key, *this, "array");
}

namespace {

struct Cursor {
    const std::string& text;
    std::size_t pos = 0;
    std::string where;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError("config: " + where + ": " + msg);
    }
    bool done() const { return pos >= text.size(); }
    char peek() const { return text[pos]; }
    void skip_ws() {
        while (!done() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
    }
};

ConfigValue parse_value(Cursor& c);

ConfigValue parse_array(Cursor& c) {
    ++c.pos;  // consume '['
    ConfigArray items;
    c.skip_ws();
    if (!c.done() && c.peek() == ']') {
        ++c.pos;
        return ConfigValue{items};
    }
    while (true) {
        c.skip_ws();
        items.push_back(parse_value(c));
        c.skip_ws();
        if (c.done()) c.fail("unterminated array");
        if (c.peek() == ',') {
            ++c.pos;
            continue;
        }
        if (c.peek() == ']') {
            ++c.pos;
            return ConfigValue{items};
        }
        c.fail(std::string("unexpected character '") + c.peek() + "' in array");
    }
}

ConfigValue parse_value(Cursor& c) {
    c.skip_ws();
    if (c.done()) c.fail("missing value");
    const char ch = c.peek();
    if (ch == '[') return parse_array(c);
    if (ch == '"') {
        ++c.pos;
        std::string s;
        while (!c.done() && c.peek() != '"') {
            s += c.peek();
            ++c.pos;
        }
        if (c.done()) c.fail("unterminated string");
        ++c.pos;
        return ConfigValue{s};
    }
    // bare word: bool or number
    std::size_t start = c.pos;
    while (!c.done() && c.peek() != ',' && c.peek() != ']' && c.peek() != '#' &&
           c.peek() != ' ' && c.peek() != '\t')
        ++c.pos;
    std::string word = c.text.substr(start, c.pos - start);
    if (word == "true") return ConfigValue{true};
    if (word == "false") return ConfigValue{false};
    try {
        std::size_t used = 0;
        const double d = std::stod(word, &used);
        if (used != word.size()) throw std::invalid_argument(word);
        return ConfigValue{d};
    } catch (const std::exception&) {
        c.fail("cannot parse value '" + word + "'");
    }
}

}  // namespace

void ConfigFile::put(const std::string& dotted_key, ConfigValue value) {
    auto it = index_.find(dotted_key);
    if (it != index_.end()) {
        entries_[it->second].second = std::move(value);
        return;
    }
    index_[dotted_key] = entries_.size();
    entries_.emplace_back(dotted_key, std::move(value));
}

ConfigFile ConfigFile::parse_string(const std::string& text,
                                    const std::string& origin) {
    ConfigFile config;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = origin + ":" + std::to_string(line_no);
        // strip comments outside strings
        bool in_string = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_string = !in_string;
            if (line[i] == '#' && !in_string) {
                line.resize(i);
                break;
            }
        }
        std::size_t begin = line.find_first_not_of(" \t\r");
        if (begin == std::string::npos) continue;
        std::size_t end = line.find_last_not_of(" \t\r");
        std::string body = line.substr(begin, end - begin + 1);

        if (body.front() == '[') {
            if (body.back() != ']')
                throw ConfigError("config: " + where + ": malformed section header");
            section = body.substr(1, body.size() - 2);
            if (section.empty())
                throw ConfigError("config: " + where + ": empty section name");
            continue;
        }
        const std::size_t eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + where + ": expected key = value");
        std::string key = body.substr(0, eq);
        key.erase(key.find_last_not_of(" \t") + 1);
        if (key.empty())
            throw ConfigError("config: " + where + ": empty key");
        std::string value_text = body.substr(eq + 1);
        Cursor cursor{value_text, 0, where};
        ConfigValue value = parse_value(cursor);
        cursor.skip_ws();
        if (!cursor.done())
            cursor.fail("trailing characters after value");
        const std::string dotted = section.empty() ? key : section + "." + key;
        config.put(dotted, std::move(value));
    }
    return config;
}

ConfigFile ConfigFile::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config: cannot open file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_string(buffer.str(), path.filename().string());
}

bool ConfigFile::has(const std::string& dotted_key) const {
    return index_.count(dotted_key) != 0;
}

const ConfigValue& ConfigFile::at(const std::string& dotted_key) const {
    auto it = index_.find(dotted_key);
    if (it == index_.end())
        throw ConfigError("config: missing key '" + dotted_key + "'");
    return entries_[it->second].second;
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
    return has(key) ? at(key).as_double(key) : fallback;
}

std::size_t ConfigFile::get_size(const std::string& key, std::size_t fallback) const {
    return has(key) ? at(key).as_size(key) : fallback;
}

std::uint64_t ConfigFile::get_u64(const std::string& key,
                                  std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::int64_t v = at(key).as_int(key);
    if (v < 0) throw ConfigError("config: key '" + key + "' must be non-negative");
    return static_cast<std::uint64_t>(v);
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
    return has(key) ? at(key).as_bool(key) : fallback;
}

std::string ConfigFile::get_string(const std::string& key,
                                   const std::string& fallback) const {
    return has(key) ? at(key).as_string(key) : fallback;
}

std::vector<std::size_t> ConfigFile::get_sizes(
    const std::string& key, std::vector<std::size_t> fallback) const {
    if (!has(key)) return fallback;
    std::vector<std::size_t> out;
    for (const ConfigValue& v : at(key).as_array(key)) out.push_back(v.as_size(key));
    return out;
}

std::vector<double> ConfigFile::get_doubles(const std::string& key,
                                            std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    for (const ConfigValue& v : at(key).as_array(key)) out.push_back(v.as_double(key));
    return out;
}

void ConfigFile::set_override(const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("config: override must look like section.key=value, got '" +
                          assignment + "'");
    const std::string key = assignment.substr(0, eq);
    std::string value_text = assignment.substr(eq + 1);
    Cursor cursor{value_text, 0, "--set " + key};
    ConfigValue value = parse_value(cursor);
    cursor.skip_ws();
    if (!cursor.done()) cursor.fail("trailing characters after value");
    put(key, std::move(value));
}

namespace {

nlohmann::ordered_json value_to_json(const ConfigValue& v) {
    switch (v.data.index()) {
        case 0: return std::get<bool>(v.data);
        case 1: {
            const double d = std::get<double>(v.data);
            if (d == std::nearbyint(d) && std::abs(d) < 9.0e15)
                return static_cast<std::int64_t>(d);
            return d;
        }
        case 2: return std::get<std::string>(v.data);
        default: {
            nlohmann::ordered_json arr = nlohmann::ordered_json::array();
            for (const ConfigValue& item : std::get<ConfigArray>(v.data))
                arr.push_back(value_to_json(item));
            return arr;
        }
    }
}

}  // namespace

nlohmann::ordered_json ConfigFile::to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [key, value] : entries_) j[key] = value_to_json(value);
    return j;
}

DataSpec data_spec_from(const ConfigFile& config) {
    DataSpec spec;
    spec.generator = config.get_string("data.generator", spec.generator);
    if (spec.generator != "blobs" && spec.generator != "moons" &&
        spec.generator != "idx")
        throw ConfigError("config: data.generator must be blobs, moons or idx, got '" +
                          spec.generator + "'");
    spec.classes = config.get_size("data.classes", spec.classes);
    spec.per_class = config.get_size("data.per_class", spec.per_class);
    spec.samples = config.get_size("data.samples", spec.samples);
    spec.dim = config.get_size("data.dim", spec.dim);
    spec.shift.rotation = config.get_double("data.rotation", spec.shift.rotation);
    spec.shift.translation =
        config.get_doubles("data.translation", spec.shift.translation);
    spec.shift.scale = config.get_double("data.scale", spec.shift.scale);
    spec.shift.noise_sigma =
        config.get_double("data.noise_sigma", spec.shift.noise_sigma);
    spec.seed = config.get_u64("data.seed", spec.seed);
    spec.downsample_to = config.get_size("data.downsample_to", spec.downsample_to);
    spec.source_limit = config.get_size("data.source_limit", spec.source_limit);
    spec.target_limit = config.get_size("data.target_limit", spec.target_limit);
    auto path = [&](const char* key) {
        return std::filesystem::path(config.get_string(key, ""));
    };
    spec.source_train_images = path("data.source_train_images");
    spec.source_train_labels = path("data.source_train_labels");
    spec.source_test_images = path("data.source_test_images");
    spec.source_test_labels = path("data.source_test_labels");
    spec.target_train_images = path("data.target_train_images");
    spec.target_train_labels = path("data.target_train_labels");
    spec.target_test_images = path("data.target_test_images");
    spec.target_test_labels = path("data.target_test_labels");
    return spec;
}

TrainConfig train_config_from(const ConfigFile& config) {
    TrainConfig cfg;
    cfg.encoder_hidden = config.get_sizes("model.encoder_hidden", cfg.encoder_hidden);
    cfg.feature_dim = config.get_size("model.feature_dim", cfg.feature_dim);
    cfg.discriminator_hidden =
        config.get_sizes("model.discriminator_hidden", cfg.discriminator_hidden);

    if (config.has("train.stages")) {
        cfg.stages.clear();
        for (const ConfigValue& stage : config.at("train.stages").as_array("train.stages")) {
            const ConfigArray& fields = stage.as_array("train.stages[]");
            if (fields.size() != 4)
                throw ConfigError(
                    "config: each train.stages entry needs 4 fields "
                    "[epoch, alpha, beta1, beta2]");
            StageWeights w;
            w.start_epoch = fields[0].as_size("train.stages[].epoch");
            w.alpha = fields[1].as_double("train.stages[].alpha");
            w.beta1 = fields[2].as_double("train.stages[].beta1");
            w.beta2 = fields[3].as_double("train.stages[].beta2");
            cfg.stages.push_back(w);
        }
    }
    cfg.threshold = config.get_double("train.threshold", cfg.threshold);
    cfg.gamma = config.get_double("train.gamma", cfg.gamma);
    const std::string variant = config.get_string("train.variant", "full");
    if (variant == "full") cfg.variant = {true, true, true};
    else if (variant == "source_only") cfg.variant = {false, false, false};
    else if (variant == "gan_only") cfg.variant = {true, false, false};
    else if (variant == "center_only") cfg.variant = {false, true, false};
    else if (variant == "gan_center") cfg.variant = {true, true, false};
    else
        throw ConfigError("config: unknown train.variant '" + variant + "'");

    const std::string opt = config.get_string("train.optimizer", "rmsprop");
    if (opt == "rmsprop") cfg.optimizer.kind = OptimizerKind::RmsProp;
    else if (opt == "sgd_momentum") cfg.optimizer.kind = OptimizerKind::SgdMomentum;
    else
        throw ConfigError("config: unknown train.optimizer '" + opt + "'");
    cfg.optimizer.learning_rate =
        config.get_double("train.learning_rate", cfg.optimizer.learning_rate);
    cfg.optimizer.decay_factor =
        config.get_double("train.decay_factor", cfg.optimizer.decay_factor);
    cfg.optimizer.decay_period =
        config.get_size("train.decay_period", cfg.optimizer.decay_period);
    cfg.optimizer.rho = config.get_double("train.rho", cfg.optimizer.rho);
    cfg.optimizer.epsilon = config.get_double("train.epsilon", cfg.optimizer.epsilon);
    cfg.optimizer.momentum =
        config.get_double("train.momentum", cfg.optimizer.momentum);
    cfg.discriminator_steps =
        config.get_size("train.discriminator_steps", cfg.discriminator_steps);
    cfg.batch_size = config.get_size("train.batch_size", cfg.batch_size);
    cfg.max_epochs = config.get_size("train.max_epochs", cfg.max_epochs);
    cfg.patience = config.get_size("train.patience", cfg.patience);
    cfg.min_improvement =
        config.get_double("train.min_improvement", cfg.min_improvement);
    cfg.seed = config.get_u64("train.seed", cfg.seed);
    cfg.validate();
    return cfg;
}

DomainDataset build_dataset(const DataSpec& spec) {
    DomainDataset dataset;
    if (spec.generator == "blobs") {
        dataset = gen_blobs(spec.classes, spec.per_class, spec.dim, spec.shift,
                            spec.seed);
    } else if (spec.generator == "moons") {
        dataset = gen_two_moons(spec.samples, spec.shift, spec.seed);
    } else if (spec.generator == "idx") {
        std::optional<std::size_t> down;
        if (spec.downsample_to > 0) down = spec.downsample_to;
        auto [src_train_x, src_train_y] =
            load_idx(spec.source_train_images, spec.source_train_labels, down);
        auto [src_test_x, src_test_y] =
            load_idx(spec.source_test_images, spec.source_test_labels, down);
        auto [tgt_train_x, tgt_train_y] =
            load_idx(spec.target_train_images, spec.target_train_labels, down);
        auto [tgt_test_x, tgt_test_y] =
            load_idx(spec.target_test_images, spec.target_test_labels, down);
        int max_label = 0;
        for (const auto* labels : {&src_train_y, &src_test_y, &tgt_train_y, &tgt_test_y})
            for (int y : *labels) max_label = std::max(max_label, y);
        const std::size_t classes = static_cast<std::size_t>(max_label) + 1;
        // Standardize everything with source-train statistics.
        const Tensor2 stats = src_train_x;
        src_train_x = normalize(src_train_x, stats);
        src_test_x = normalize(src_test_x, stats);
        tgt_train_x = normalize(tgt_train_x, stats);
        tgt_test_x = normalize(tgt_test_x, stats);
        dataset = DomainDataset({std::move(src_train_x), std::move(src_train_y)},
                                {std::move(src_test_x), std::move(src_test_y)},
                                std::move(tgt_train_x), std::move(tgt_train_y),
                                {std::move(tgt_test_x), std::move(tgt_test_y)},
                                classes);
    }
    if (spec.source_limit > 0 || spec.target_limit > 0)
        dataset.limit_train_sizes(spec.source_limit, spec.target_limit, spec.seed);
    return dataset;
}

}  // namespace uda
