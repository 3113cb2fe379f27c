#pragma once

// Line-oriented run configuration: `section.key = value` with sections
// topology, train, data and eval. Unknown keys are rejected; values are
// type-checked. Defaults are the stock 64x64 topology, the stock training
// hyperparameters, and a 32x32 two-blob sprite generator.

#include <fstream>

#include "frnn/data.hpp"
#include "frnn/training.hpp"

namespace frnn {

struct RunConfig {
    TopologySpec topology = default_topology();
    TrainConfig train;
    SpriteConfig data;
    std::size_t eval_g = 10;
    std::size_t eval_p = 10;
    std::string data_idx_path;  // glyph source, loaded by the CLI when set
};

namespace detail {

inline double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const unsigned long long n = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
}

inline std::int64_t parse_i64(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const long long n = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
}

inline bool apply_train_kv(TrainConfig& t, const std::string& key, const std::string& value) {
    if (key == "g")
        t.g = parse_size(value, key);
    else if (key == "p")
        t.p = parse_size(value, key);
    else if (key == "learning_rate")
        t.learning_rate = parse_double(value, key);
    else if (key == "batch_size")
        t.batch_size = parse_size(value, key);
    else if (key == "steps")
        t.steps = parse_size(value, key);
    else if (key == "seed")
        t.seed = parse_u64(value, key);
    else if (key == "rmsprop_decay")
        t.rmsprop_decay = parse_double(value, key);
    else if (key == "rmsprop_epsilon")
        t.rmsprop_epsilon = parse_double(value, key);
    else
        return false;
    return true;
}

inline bool apply_data_kv(RunConfig& c, const std::string& key, const std::string& value) {
    SpriteConfig& d = c.data;
    if (key == "canvas_height")
        d.canvas_height = parse_size(value, key);
    else if (key == "canvas_width")
        d.canvas_width = parse_size(value, key);
    else if (key == "frames")
        d.frames = parse_size(value, key);
    else if (key == "sprites")
        d.sprites = parse_size(value, key);
    else if (key == "sprite_size")
        d.sprite_size = parse_size(value, key);
    else if (key == "speed_min")
        d.speed_min = parse_i64(value, key);
    else if (key == "speed_max")
        d.speed_max = parse_i64(value, key);
    else if (key == "seed")
        d.seed = parse_u64(value, key);
    else if (key == "source") {
        if (value == "blobs")
            d.source = SpriteSource::blobs;
        else if (value == "glyphs")
            d.source = SpriteSource::glyphs;
        else
            throw ConfigError("data.source: expected blobs or glyphs, got '" + value + "'");
    } else if (key == "idx")
        c.data_idx_path = value;
    else
        return false;
    return true;
}

}  // namespace detail

inline RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        line = detail::trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": missing '=' in '" + line + "'");
        const std::string full_key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        const auto dot = full_key.find('.');
        if (dot == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": key '" + full_key +
                              "' has no section");
        const std::string section = full_key.substr(0, dot);
        const std::string key = full_key.substr(dot + 1);
        bool known = false;
        if (section == "topology")
            known = apply_topology_kv(cfg.topology, key, value);
        else if (section == "train")
            known = detail::apply_train_kv(cfg.train, key, value);
        else if (section == "data")
            known = detail::apply_data_kv(cfg, key, value);
        else if (section == "eval") {
            if (key == "g") {
                cfg.eval_g = detail::parse_size(value, full_key);
                known = true;
            } else if (key == "p") {
                cfg.eval_p = detail::parse_size(value, full_key);
                known = true;
            }
        } else {
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown section '" +
                              section + "'");
        }
        if (!known)
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + full_key +
                              "'");
    }
    cfg.topology.validate();
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FileError("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace frnn
