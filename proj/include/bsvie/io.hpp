#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "bsvie/errors.hpp"

namespace bsvie::io {

// Shortest round-trip decimal form; independent of locale and stream state.
inline std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}
inline std::string fmt(long long v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[v & 0xf];
        v >>= 4;
    }
    buf[16] = '\0';
    return buf;
}

// Ordered key/value echo of a run configuration. The hash covers only these entries,
// so it is the same for every run with the same resolved inputs.
class Manifest {
public:
    void set(const std::string& key, const std::string& value) { entries_[key] = value; }
    void set(const std::string& key, double value) { entries_[key] = fmt(value); }
    void set(const std::string& key, long long value) { entries_[key] = fmt(value); }
    void set(const std::string& key, int value) { entries_[key] = fmt(value); }
    void set(const std::string& key, const char* value) { entries_[key] = value; }

    const std::map<std::string, std::string>& entries() const { return entries_; }

    std::string canonical() const {
        std::string out;
        for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
        return out;
    }
    std::string hash() const { return hex64(fnv1a(canonical())); }

private:
    std::map<std::string, std::string> entries_;
};

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& manifest_hash, const std::vector<std::string>& columns)
        : out_(path, std::ios::binary) {
        if (!out_) throw InvalidArgument("cannot open '" + path + "' for writing");
        out_ << "# manifest=" << manifest_hash << "\n";
        for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
        out_ << "\n";
    }

    template <class... Args>
    void row(const Args&... args) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(args), first = false), ...);
        out_ << "\n";
    }

private:
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    static std::string cell(double v) { return fmt(v); }
    static std::string cell(int v) { return fmt(v); }
    static std::string cell(long long v) { return fmt(v); }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(bool v) { return v ? "true" : "false"; }
    std::ofstream out_;
};

// Flat "key = value" text; '#' starts a comment, blank lines are skipped.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::istream& in, const std::string& origin = "<config>") {
        KeyValueConfig cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const auto eq = line.find('=');
            const std::string lhs = trim(line.substr(0, eq));
            if (lhs.empty() && eq == std::string::npos) continue;
            if (eq == std::string::npos || lhs.empty())
                throw InvalidArgument(origin + ":" + std::to_string(lineno) + ": expected key = value");
            cfg.values_[lhs] = trim(line.substr(eq + 1));
        }
        return cfg;
    }

    static KeyValueConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw InvalidArgument("cannot read config '" + path + "'");
        return parse(in, path);
    }

    // Accepts "k1=v1,k2=v2" as a compact inline form.
    static KeyValueConfig from_inline(const std::string& text) {
        std::string s = text;
        for (char& c : s)
            if (c == ',' || c == ';') c = '\n';
        std::istringstream in(s);
        return parse(in, "<inline>");
    }

    void merge(const KeyValueConfig& other) {
        for (const auto& [k, v] : other.values_) values_[k] = v;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const { return values_; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double number(const std::string& key, double fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        double v = 0.0;
        const auto& s = it->second;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw InvalidArgument("config key '" + key + "': '" + s + "' is not a number");
        return v;
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }
    std::map<std::string, std::string> values_;
};

// Flat "key = value" report with the manifest reference on top.
inline void write_report(const std::string& path, const std::string& manifest_hash,
                         const std::vector<std::pair<std::string, std::string>>& items) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot open '" + path + "' for writing");
    out << "# manifest=" << manifest_hash << "\n";
    for (const auto& [k, v] : items) out << k << " = " << v << "\n";
}

inline void write_manifest(const std::string& path, const Manifest& m,
                           const std::vector<std::pair<std::string, std::string>>& run_info) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot open '" + path + "' for writing");
    out << "# manifest=" << m.hash() << "\n";
    out << m.canonical();
    // Wall-clock data is kept under a separate header so it never enters the hash.
    out << "# run\n";
    for (const auto& [k, v] : run_info) out << k << "=" << v << "\n";
}

}  // namespace bsvie::io
