// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace wildsplat::cli {

/// Flat key=value run configuration. Layers are merged in order
/// defaults < file < flags; every value stays a string until read.
class RunConfig {
  public:
    explicit RunConfig(std::map<std::string, std::string> defaults) : values_(std::move(defaults)) {}

    /// Reads `key = value` lines; '#' starts a comment. Unknown keys are
    /// rejected so typos do not pass silently.
    void merge_file(const std::filesystem::path& path);
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const std::string& str(const std::string& key) const;
    int integer(const std::string& key) const;
    uint64_t uint(const std::string& key) const;
    double real(const std::string& key) const;
    bool boolean(const std::string& key) const;

    /// Sorted `key = value` lines.
    std::string dump() const;
    void write(const std::filesystem::path& path) const;

  private:
    std::map<std::string, std::string> values_;
};

} // namespace wildsplat::cli
