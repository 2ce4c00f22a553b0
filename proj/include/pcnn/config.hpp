#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "pcnn/common.hpp"

namespace pcnn {

/// Line-oriented `key = value` configuration with [section] headers; keys are
/// flattened to "section.key". '#' starts a comment.
class Config {
public:
    Config() = default;
    static Config from_file(const std::string& path);
    static Config from_string(const std::string& text);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string get(const std::string& key, const std::string& dflt) const;
    double get(const std::string& key, double dflt) const;
    int get(const std::string& key, int dflt) const;
    std::uint64_t get(const std::string& key, std::uint64_t dflt) const;
    bool get(const std::string& key, bool dflt) const;

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

} // namespace pcnn
