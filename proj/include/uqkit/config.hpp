#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "matrix.hpp"

namespace uqkit {

inline std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
}

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// Flat `key = value` configuration; `#` starts a comment, blank lines are
// skipped. Values stay strings until queried.
struct KvConfig {
    std::map<std::string, std::string> values;

    static KvConfig parse(std::istream& in) {
        KvConfig cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            size_t hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
            std::string key = trim(line.substr(0, eq));
            std::string val = trim(line.substr(eq + 1));
            if (key.empty()) throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
            cfg.values[key] = val;
        }
        return cfg;
    }

    static KvConfig parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config file: " + path);
        return parse(in);
    }

    bool has(const std::string& key) const { return values.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& fallback) const {
        auto it = values.find(key);
        return it == values.end() ? fallback : it->second;
    }
    double get_double(const std::string& key, double fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(it->second, &pos);
        } catch (const std::exception&) {
            throw std::runtime_error("config key " + key + ": bad number");
        }
        if (pos != it->second.size()) throw std::runtime_error("config key " + key + ": bad number");
        return v;
    }
    long long get_int(const std::string& key, long long fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        size_t pos = 0;
        long long v = 0;
        try {
            v = std::stoll(it->second, &pos);
        } catch (const std::exception&) {
            throw std::runtime_error("config key " + key + ": bad integer");
        }
        if (pos != it->second.size()) throw std::runtime_error("config key " + key + ": bad integer");
        return v;
    }
    unsigned long long get_u64(const std::string& key, unsigned long long fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        size_t pos = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(it->second, &pos);
        } catch (const std::exception&) {
            throw std::runtime_error("config key " + key + ": bad integer");
        }
        if (pos != it->second.size()) throw std::runtime_error("config key " + key + ": bad integer");
        return v;
    }
    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        const std::string& v = it->second;
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw std::runtime_error("config key " + key + ": bad boolean");
    }
    void set(const std::string& key, const std::string& val) { values[key] = val; }

    // sorted key = value lines, the canonical echoed form
    std::string echo() const {
        std::ostringstream out;
        for (const auto& [k, v] : values) out << k << " = " << v << "\n";
        return out.str();
    }
};

inline std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::string token;
    std::istringstream in(s);
    while (std::getline(in, token, ',')) {
        token = trim(token);
        if (token.empty()) continue;
        out.push_back(std::stod(token));
    }
    return out;
}

inline std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    for (double v : parse_double_list(s)) out.push_back(static_cast<int>(v));
    return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Minimal CSV assembly; all doubles go through the %.17g round-trip format so
// outputs are byte-stable across runs.
struct CsvBuilder {
    std::ostringstream out;
    bool line_open = false;

    void field(const std::string& s) {
        if (line_open) out << ",";
        out << s;
        line_open = true;
    }
    void field(double v) { field(fmt_g17(v)); }
    void field(int v) { field(std::to_string(v)); }
    void endrow() {
        out << "\n";
        line_open = false;
    }
    std::string str() const { return out.str(); }
};

}  // namespace uqkit
