#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

// Flat key-value experiment configuration: one "dotted.key = value" per line,
// '#' comments, JSON-compatible scalars and [..] lists. Errors carry the
// offending line number.

namespace entot {

struct ConfigError : std::runtime_error {
    int line;
    ConfigError(const std::string& msg, int line_no)
        : std::runtime_error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
};

class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path, 0);
        return parse(in);
    }

    static KeyValueConfig parse(std::istream& in) {
        KeyValueConfig cfg;
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            const size_t eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError("expected 'key = value'", line_no);
            std::string key = trim(trimmed.substr(0, eq));
            std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty()) throw ConfigError("empty key", line_no);
            if (value.empty()) throw ConfigError("empty value for key '" + key + "'", line_no);
            if (cfg.entries_.count(key))
                throw ConfigError("duplicate key '" + key + "'", line_no);
            cfg.entries_[key] = {value, line_no};
        }
        return cfg;
    }

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    int line_of(const std::string& key) const {
        auto it = entries_.find(key);
        return it == entries_.end() ? 0 : it->second.line;
    }

    std::string get_string(const std::string& key) const {
        const Entry& e = require(key);
        std::string v = e.value;
        if (v.size() >= 2 && v.front() == '"' && v.back() == '"')
            v = v.substr(1, v.size() - 2);
        return v;
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        return has(key) ? get_string(key) : fallback;
    }

    double get_double(const std::string& key) const {
        const Entry& e = require(key);
        return to_double(e.value, key, e.line);
    }

    double get_double(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    int get_int(const std::string& key) const {
        const Entry& e = require(key);
        double v = to_double(e.value, key, e.line);
        int i = static_cast<int>(v);
        if (static_cast<double>(i) != v)
            throw ConfigError("key '" + key + "' must be an integer", e.line);
        return i;
    }

    int get_int(const std::string& key, int fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    std::vector<double> get_double_list(const std::string& key) const {
        const Entry& e = require(key);
        std::string v = e.value;
        if (v.size() < 2 || v.front() != '[' || v.back() != ']')
            throw ConfigError("key '" + key + "' must be a [..] list", e.line);
        v = v.substr(1, v.size() - 2);
        std::vector<double> out;
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            out.push_back(to_double(item, key, e.line));
        }
        if (out.empty()) throw ConfigError("key '" + key + "' is an empty list", e.line);
        return out;
    }

private:
    struct Entry {
        std::string value;
        int line = 0;
    };

    const Entry& require(const std::string& key) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) throw ConfigError("missing key '" + key + "'", 0);
        return it->second;
    }

    static double to_double(const std::string& s, const std::string& key, int line) {
        try {
            size_t pos = 0;
            double v = std::stod(s, &pos);
            if (pos != s.size())
                throw ConfigError("key '" + key + "' has a malformed number '" + s + "'", line);
            return v;
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "' has a malformed number '" + s + "'", line);
        }
    }

    static std::string trim(const std::string& s) {
        size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

    std::map<std::string, Entry> entries_;
};

} // namespace entot
