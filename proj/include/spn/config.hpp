#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace spn {

enum class ValueKind { Int, Real, Bool, Text, IntList, Choice };

struct KeySpec {
    std::string key;
    ValueKind kind;
    std::string default_value;
    std::string help;
    std::vector<std::string> choices; // only for ValueKind::Choice
};

// Every configuration key the system understands, with its default.
// Order is the canonical serialization order.
const std::vector<KeySpec>& config_schema();

// Merged run configuration: defaults <- preset <- config file <- flags.
// Values are stored as validated text; typed getters parse on access.
class RunConfig {
public:
    RunConfig(); // schema defaults

    // The reduced-size preset used for CPU-scale experiments.
    static RunConfig desk();

    static RunConfig from_text(const std::string& text, RunConfig base = RunConfig());
    static RunConfig from_file(const std::filesystem::path& path, RunConfig base = RunConfig());

    // Rejects unknown keys and values that fail to parse as the key's kind.
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    const std::string& text(const std::string& key) const;
    int64_t integer(const std::string& key) const;
    double real(const std::string& key) const;
    bool boolean(const std::string& key) const;
    std::vector<int64_t> int_list(const std::string& key) const;

    // "key = value" lines in schema order.
    std::string to_text() const;
    void save(const std::filesystem::path& path) const;

    bool operator==(const RunConfig& other) const { return values_ == other.values_; }

private:
    std::map<std::string, std::string> values_;
};

std::vector<int64_t> parse_int_list(const std::string& text);
std::string format_int_list(const std::vector<int64_t>& values);

} // namespace spn
