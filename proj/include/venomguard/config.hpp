#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace venomguard {

enum class ConfigType { Real, Count, Flag, Text };

struct ConfigKey {
    std::string name;
    ConfigType type;
    std::string default_value;
    std::string description;
    std::vector<std::string> choices;  // Text keys: allowed values (empty = any)
};

// Flat `key = value` settings. Later sources override earlier ones:
// defaults, then a config file, then explicit overrides.
class RunConfig {
public:
    RunConfig();

    static const std::vector<ConfigKey>& registry();
    static const ConfigKey* find_key(std::string_view name);

    // One `key = value` per line; `#` starts a comment. Malformed lines are a
    // Parse error carrying the line number, unknown keys or bad values an
    // Argument error.
    void load_file(const std::filesystem::path& path);
    void load_text(std::string_view text, const std::string& origin);

    void set(const std::string& key, const std::string& value);
    // "key=value"
    void apply_override(std::string_view assignment);

    // True once a file or override has assigned the key.
    bool is_set(const std::string& key) const { return explicit_.count(key) > 0; }

    const std::string& raw(const std::string& key) const;
    double real(const std::string& key) const;
    std::uint64_t count(const std::string& key) const;
    bool flag(const std::string& key) const;
    const std::string& text(const std::string& key) const { return raw(key); }

    // Resolved `key = value` lines for keys under any of the given prefixes
    // (all keys when empty).
    std::string dump(const std::vector<std::string>& prefixes = {}) const;

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> explicit_;
};

}  // namespace venomguard
