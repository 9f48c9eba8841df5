#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bdsde/errors.hpp"

namespace bdsde {

/// Flat key-value configuration with [sections]; no embedded code, every
/// function is chosen by registry name plus parameters. Serialization is
/// canonical (sorted), so parse -> serialize -> parse is the identity and
/// the serialized form is hashable.
class Config {
public:
    static Config parse(const std::string& text);
    static Config load_file(const std::string& path);
    std::string serialize() const;
    std::uint64_t hash() const;

    bool operator==(const Config& o) const { return sections_ == o.sections_; }

    bool has(const std::string& section, const std::string& key) const;
    void set(const std::string& section, const std::string& key, const std::string& value);

    std::string get_str(const std::string& section, const std::string& key) const;
    std::string get_str(const std::string& section, const std::string& key,
                        const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& section, const std::string& key) const;
    std::int64_t get_int(const std::string& section, const std::string& key,
                         std::int64_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    /// Comma-separated list of reals.
    std::vector<double> get_list(const std::string& section, const std::string& key) const;
    std::vector<double> get_list(const std::string& section, const std::string& key,
                                 std::vector<double> fallback) const;

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

} // namespace bdsde
