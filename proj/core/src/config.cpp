#include "waswhistle/config.hpp"

#include <cstdio>
#include <sstream>

#include "waswhistle/io.hpp"

namespace waswhistle {

static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

Config Config::parse(const std::string& text) {
    Config c;
    std::istringstream ss(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(line.substr(0, eq));
        if (!section.empty()) key = section + "." + key;
        c.kv_[key] = trim(line.substr(eq + 1));
    }
    return c;
}

Config Config::load(const std::string& path) { return parse(read_text_file(path)); }

std::string Config::text() const {
    // canonical: sorted fully-qualified keys, no section headers
    std::ostringstream out;
    for (const auto& [k, v] : kv_) out << k << "=" << v << "\n";
    return out.str();
}

uint64_t Config::digest() const { return fnv1a(text()); }

void Config::save(const std::string& path) const { write_text_file(path, text()); }

void Config::set_double(const std::string& key, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    kv_[key] = buf;
}

std::string Config::get(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("missing config key: " + key);
    return it->second;
}

std::string Config::get_or(const std::string& key, const std::string& def) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
}

int64_t Config::get_int(const std::string& key) const { return std::stoll(get(key)); }
int64_t Config::get_int_or(const std::string& key, int64_t def) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : std::stoll(it->second);
}
double Config::get_double(const std::string& key) const { return std::stod(get(key)); }
double Config::get_double_or(const std::string& key, double def) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : std::stod(it->second);
}
uint64_t Config::get_u64_or(const std::string& key, uint64_t def) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : std::stoull(it->second);
}

void Config::overlay(const Config& other) {
    for (const auto& [k, v] : other.kv_) kv_[k] = v;
}

} // namespace waswhistle
