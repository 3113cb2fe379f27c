#pragma once

// Text form of a topology, shared by the config file format and checkpoint
// headers. Keys use the config file's `topology.` section:
//
//   topology.image_channels = 1
//   topology.image_height = 64
//   topology.image_width = 64
//   topology.pre_convs = 32:5,64:5        (channels:kernel[:tanh|sigmoid])
//   topology.bgru = 128:5:p,128:5,...     (channels:kernel[:p])
//   topology.output_activation = sigmoid

#include <sstream>
#include <string>
#include <vector>

#include "frnn/folded.hpp"

namespace frnn {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(trim(cur));
    return out;
}

inline std::size_t parse_size(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const long long n = std::stoll(v, &pos);
        if (pos != v.size() || n < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
}

inline Activation parse_activation(const std::string& v, const std::string& key) {
    if (v == "sigmoid") return Activation::sigmoid;
    if (v == "tanh") return Activation::tanh;
    throw ConfigError(key + ": unknown activation '" + v + "'");
}

}  // namespace detail

// Applies one `topology.<key> = <value>` pair. Returns false for keys that do
// not belong to the topology section.
inline bool apply_topology_kv(TopologySpec& t, const std::string& key, const std::string& value) {
    using detail::parse_size;
    if (key == "image_channels") {
        t.image_channels = parse_size(value, key);
    } else if (key == "image_height") {
        t.image_height = parse_size(value, key);
    } else if (key == "image_width") {
        t.image_width = parse_size(value, key);
    } else if (key == "output_activation") {
        t.output_activation = detail::parse_activation(value, key);
    } else if (key == "pre_convs") {
        t.pre_convs.clear();
        if (!detail::trim(value).empty())
            for (const auto& item : detail::split(value, ',')) {
                const auto parts = detail::split(item, ':');
                if (parts.size() < 2 || parts.size() > 3)
                    throw ConfigError("pre_convs: expected channels:kernel[:activation], got '" + item + "'");
                ConvSpec c;
                c.channels = parse_size(parts[0], key);
                c.kernel = parse_size(parts[1], key);
                c.activation = parts.size() == 3 ? detail::parse_activation(parts[2], key) : Activation::tanh;
                t.pre_convs.push_back(c);
            }
    } else if (key == "bgru") {
        t.bgru_layers.clear();
        if (!detail::trim(value).empty())
            for (const auto& item : detail::split(value, ',')) {
                const auto parts = detail::split(item, ':');
                if (parts.size() < 2 || parts.size() > 3 || (parts.size() == 3 && parts[2] != "p"))
                    throw ConfigError("bgru: expected channels:kernel[:p], got '" + item + "'");
                BGruSpec l;
                l.channels = parse_size(parts[0], key);
                l.kernel = parse_size(parts[1], key);
                l.pooled = parts.size() == 3;
                t.bgru_layers.push_back(l);
            }
    } else {
        return false;
    }
    return true;
}

inline std::string topology_to_text(const TopologySpec& t) {
    std::ostringstream os;
    os << "topology.image_channels = " << t.image_channels << '\n';
    os << "topology.image_height = " << t.image_height << '\n';
    os << "topology.image_width = " << t.image_width << '\n';
    os << "topology.pre_convs = ";
    for (std::size_t i = 0; i < t.pre_convs.size(); ++i) {
        if (i) os << ',';
        os << t.pre_convs[i].channels << ':' << t.pre_convs[i].kernel;
        if (t.pre_convs[i].activation != Activation::tanh)
            os << ':' << activation_name(t.pre_convs[i].activation);
    }
    os << '\n';
    os << "topology.bgru = ";
    for (std::size_t i = 0; i < t.bgru_layers.size(); ++i) {
        if (i) os << ',';
        os << t.bgru_layers[i].channels << ':' << t.bgru_layers[i].kernel;
        if (t.bgru_layers[i].pooled) os << ":p";
    }
    os << '\n';
    os << "topology.output_activation = " << activation_name(t.output_activation) << '\n';
    return os.str();
}

inline TopologySpec topology_from_text(const std::string& text) {
    TopologySpec t;
    t.pre_convs.clear();
    t.bgru_layers.clear();
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        line = detail::trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("topology text: missing '=' in '" + line + "'");
        std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        const std::string prefix = "topology.";
        if (key.rfind(prefix, 0) != 0) throw ConfigError("topology text: unexpected key '" + key + "'");
        key = key.substr(prefix.size());
        if (!apply_topology_kv(t, key, value))
            throw ConfigError("topology text: unknown key 'topology." + key + "'");
    }
    t.validate();
    return t;
}

}  // namespace frnn
