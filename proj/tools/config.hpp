#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace attriweight::cli {

/// Raised for malformed config files, unknown keys, or bad value types.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Flat INI-style configuration: [section] headers, key = value lines,
/// '#' comments. Every accepted key is declared in the schema with a typed
/// default; unknown sections or keys are rejected.
class RunConfig {
public:
    /// Schema defaults only.
    RunConfig();

    /// Defaults overlaid with an INI file.
    static RunConfig from_file(const std::string& path);

    /// Applies one "section.key=value" override.
    void set(const std::string& dotted_key, const std::string& value);

    std::int64_t get_int(const std::string& section, const std::string& key) const;
    double get_real(const std::string& section, const std::string& key) const;
    std::string get_string(const std::string& section, const std::string& key) const;
    std::vector<double> get_real_list(const std::string& section, const std::string& key) const;
    std::vector<int> get_int_list(const std::string& section, const std::string& key) const;

    /// The full resolved config as INI text (sections and keys sorted).
    std::string to_ini() const;

    /// All values as a sorted section.key -> value map (for manifests).
    std::map<std::string, std::string> flat() const;

    /// One line per key: "section.key (type, default=...)  description".
    static std::string describe_keys();

private:
    void set_checked(const std::string& section, const std::string& key,
                     const std::string& value);
    const std::string& raw(const std::string& section, const std::string& key) const;

    std::map<std::string, std::map<std::string, std::string>> values_;
};

}  // namespace attriweight::cli
