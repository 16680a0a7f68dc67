#pragma once
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace waswhistle {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat key-value configuration with [section] headers. Serialization is
// canonical (sorted keys) so config digests are stable.
class Config {
public:
    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    std::string text() const;     // canonical form
    uint64_t digest() const;
    void save(const std::string& path) const;

    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    void set(const std::string& key, const std::string& v) { kv_[key] = v; }
    void set_int(const std::string& key, int64_t v) { kv_[key] = std::to_string(v); }
    void set_double(const std::string& key, double v);

    std::string get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& def) const;
    int64_t get_int(const std::string& key) const;
    int64_t get_int_or(const std::string& key, int64_t def) const;
    double get_double(const std::string& key) const;
    double get_double_or(const std::string& key, double def) const;
    uint64_t get_u64_or(const std::string& key, uint64_t def) const;

    const std::map<std::string, std::string>& entries() const { return kv_; }

    // merge other's entries over this one's
    void overlay(const Config& other);

private:
    std::map<std::string, std::string> kv_; // key is "section.name" or bare "name"
};

} // namespace waswhistle
