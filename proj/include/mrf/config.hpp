#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace mrf {

/// Flat `key = value` settings. Lines starting with '#' are comments. Keys
/// are kept sorted so writing is deterministic.
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text);
    static KeyValueConfig load(const std::filesystem::path& path);

    std::string to_string() const;
    void save(const std::filesystem::path& path) const;

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    const std::string& get(const std::string& key) const;

    // Typed readers; throw ContractError on malformed values.
    std::uint64_t get_uint(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    /// Entries of `other` override ours.
    void merge(const KeyValueConfig& other);

private:
    std::map<std::string, std::string> values_;
};

/// Round-trip-exact decimal rendering of a double.
std::string format_double(double value);

}  // namespace mrf
