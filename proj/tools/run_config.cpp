// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "run_config.hpp"

#include "wildsplat/tensor/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace wildsplat::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) throw DomainError("config key '" + key + "': cannot parse '" + text + "'");
    return value;
}

} // namespace

void RunConfig::merge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DomainError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!has(key)) throw DomainError("unknown config key '" + key + "'");
    values_[key] = value;
}

const std::string& RunConfig::str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw StateError("config has no key '" + key + "'");
    return it->second;
}

int RunConfig::integer(const std::string& key) const { return parse_number<int>(key, str(key)); }

uint64_t RunConfig::uint(const std::string& key) const { return parse_number<uint64_t>(key, str(key)); }

double RunConfig::real(const std::string& key) const { return parse_number<double>(key, str(key)); }

bool RunConfig::boolean(const std::string& key) const {
    const auto& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw DomainError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::string RunConfig::dump() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
    return out.str();
}

void RunConfig::write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    out << dump();
    if (!out) throw IoError("failed writing " + path.string());
}

} // namespace wildsplat::cli
