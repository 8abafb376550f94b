#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>

namespace thermsplat::config {

/// Flat `key = value` settings. Lines starting with '#' and blank lines are ignored.
class KeyValues {
public:
    static KeyValues load(const std::filesystem::path& path);
    static KeyValues parse(const std::string& text, const std::string& origin = "config");

    void set(const std::string& key, const std::string& value) { entries_[key] = value; }
    bool has(const std::string& key) const { return entries_.count(key) != 0; }
    std::optional<std::string> get(const std::string& key) const;
    const std::map<std::string, std::string>& entries() const { return entries_; }

    /// Throws UsageError naming the first key not in `known`.
    void require_known(const std::set<std::string>& known) const;

    /// Values from `other` override ours.
    void merge(const KeyValues& other);

    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;

    std::string to_string() const;

private:
    std::map<std::string, std::string> entries_;
};

std::string format_double(double v);

}  // namespace thermsplat::config
