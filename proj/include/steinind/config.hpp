#pragma once

// Flat key = value files. '#' starts a comment, blank lines are ignored,
// keys are case-sensitive and may contain dots. Lists are comma separated.
// Every key must be consumed by the reader; leftovers are reported so that
// typos do not silently fall back to defaults.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "steinind/error.hpp"

namespace steinind {

namespace detail {

/// Shortest decimal string that reads back to the same double.
inline std::string shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
    if (t == "-inf") return -std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != t.size()) throw ConfigError("key '" + key + "': '" + t + "' is not a number");
    return v;
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        if (!t.empty() && t[0] != '-') v = std::stoull(t, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != t.size())
        throw ConfigError("key '" + key + "': '" + t + "' is not a non-negative integer");
    return v;
}

}  // namespace detail

class KeyValueFile {
public:
    KeyValueFile() = default;

    static KeyValueFile parse(std::istream& in, const std::string& origin = "<input>") {
        KeyValueFile f;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
            const std::string key = detail::trim(line.substr(0, eq));
            if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            if (f.values_.count(key))
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
            f.values_[key] = detail::trim(line.substr(eq + 1));
        }
        return f;
    }

    static KeyValueFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        return parse(in, path);
    }

    static KeyValueFile from_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_string(const std::string& key) const { return raw(key); }
    std::string get_string(const std::string& key, const std::string& fallback) const {
        return has(key) ? raw(key) : fallback;
    }

    double get_real(const std::string& key) const { return detail::parse_real(key, raw(key)); }
    double get_real(const std::string& key, double fallback) const {
        return has(key) ? get_real(key) : fallback;
    }

    std::uint64_t get_unsigned(const std::string& key) const { return detail::parse_unsigned(key, raw(key)); }
    std::uint64_t get_unsigned(const std::string& key, std::uint64_t fallback) const {
        return has(key) ? get_unsigned(key) : fallback;
    }

    std::vector<double> get_reals(const std::string& key) const {
        std::vector<double> out;
        for (const auto& item : split(raw(key))) out.push_back(detail::parse_real(key, item));
        if (out.empty()) throw ConfigError("key '" + key + "' must be a nonempty list");
        return out;
    }
    std::vector<double> get_reals(const std::string& key, std::vector<double> fallback) const {
        return has(key) ? get_reals(key) : fallback;
    }

    std::vector<std::uint64_t> get_unsigneds(const std::string& key) const {
        std::vector<std::uint64_t> out;
        for (const auto& item : split(raw(key))) out.push_back(detail::parse_unsigned(key, item));
        if (out.empty()) throw ConfigError("key '" + key + "' must be a nonempty list");
        return out;
    }
    std::vector<std::uint64_t> get_unsigneds(const std::string& key, std::vector<std::uint64_t> fallback) const {
        return has(key) ? get_unsigneds(key) : fallback;
    }

    /// Throws if any key was never read.
    void require_all_used() const {
        for (const auto& [k, v] : values_)
            if (!used_.count(k)) throw ConfigError("unknown config key '" + k + "'");
    }

    const std::map<std::string, std::string>& entries() const noexcept { return values_; }

private:
    const std::string& raw(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
        used_.insert(key);
        return it->second;
    }

    static std::vector<std::string> split(const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = detail::trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

}  // namespace steinind
