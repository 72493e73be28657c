#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>

#include "gltd/common.hpp"

namespace gltd {

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

// Plain key = value lines; '#' starts a comment, blank lines ignored.
inline KeyValues read_config_file(const std::string& path) {
    std::ifstream in(path);
    check_config(in.good(), "cannot open config file: " + path);
    KeyValues kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const std::size_t eq = t.find('=');
        check_config(eq != std::string::npos,
                     path + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string val = detail::trim(t.substr(eq + 1));
        check_config(!key.empty(), path + ":" + std::to_string(lineno) + ": empty key");
        kv[key] = val;
    }
    return kv;
}

// Splits "key=value" (used for command-line overrides).
inline void apply_override(KeyValues& kv, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    check_config(eq != std::string::npos && eq > 0, "override must look like key=value: " + assignment);
    kv[detail::trim(assignment.substr(0, eq))] = detail::trim(assignment.substr(eq + 1));
}

// Typed getters. Each erases the consumed key so callers can reject leftovers
// (unknown keys are almost always typos).
class ConfigReader {
public:
    explicit ConfigReader(KeyValues kv) : kv_(std::move(kv)) {}

    std::string get_string(const std::string& key, const std::string& fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        std::string v = it->second;
        kv_.erase(it);
        return v;
    }

    double get_double(const std::string& key, double fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        try {
            std::size_t used = 0;
            const double v = std::stod(it->second, &used);
            check_config(used == it->second.size(), "");
            kv_.erase(it);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' is not a number: " + it->second);
        }
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(it->second, &used);
            check_config(used == it->second.size() && it->second[0] != '-', "");
            kv_.erase(it);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' is not a nonnegative integer: " + it->second);
        }
    }

    std::size_t get_size(const std::string& key, std::size_t fallback) {
        return static_cast<std::size_t>(get_u64(key, fallback));
    }

    bool get_bool(const std::string& key, bool fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        std::string v = it->second;
        kv_.erase(it);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw ConfigError("config key '" + key + "' is not a boolean: " + v);
    }

    void reject_unknown() const {
        if (kv_.empty()) return;
        std::string msg = "unknown config keys:";
        for (const auto& [k, v] : kv_) msg += " " + k;
        throw ConfigError(msg);
    }

private:
    KeyValues kv_;
};

}  // namespace gltd
