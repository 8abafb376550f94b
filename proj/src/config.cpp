#include "thermsplat/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "thermsplat/error.hpp"

namespace thermsplat::config {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
    throw UsageError("config key '" + key + "': '" + value + "' is not " + what);
}

}  // namespace

KeyValues KeyValues::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

KeyValues KeyValues::parse(const std::string& text, const std::string& origin) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw UsageError(origin + ":" + std::to_string(number) + ": expected key=value");
        }
        const std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw UsageError(origin + ":" + std::to_string(number) + ": empty key");
        if (kv.has(key)) throw UsageError(origin + ":" + std::to_string(number) + ": duplicate key '" + key + "'");
        kv.set(key, trim(t.substr(eq + 1)));
    }
    return kv;
}

std::optional<std::string> KeyValues::get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void KeyValues::require_known(const std::set<std::string>& known) const {
    for (const auto& [k, v] : entries_) {
        if (!known.count(k)) throw UsageError("unknown config key '" + k + "'");
    }
}

void KeyValues::merge(const KeyValues& other) {
    for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        const double d = std::stod(*v, &used);
        if (used != v->size()) bad_value(key, *v, "a number");
        return d;
    } catch (const std::logic_error&) {
        bad_value(key, *v, "a number");
    }
}

int KeyValues::get_int(const std::string& key, int fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    int out = 0;
    auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || p != v->data() + v->size()) bad_value(key, *v, "an integer");
    return out;
}

std::uint64_t KeyValues::get_u64(const std::string& key, std::uint64_t fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || p != v->data() + v->size()) bad_value(key, *v, "a non-negative integer");
    return out;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    bad_value(key, *v, "a boolean");
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
    auto v = get(key);
    return v ? *v : fallback;
}

std::string KeyValues::to_string() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
    return out;
}

std::string format_double(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

}  // namespace thermsplat::config
