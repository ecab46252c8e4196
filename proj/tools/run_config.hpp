#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

namespace avgeo::cli {

/// key=value lines; '#' starts a comment. Keys are long option names without dashes.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

/// Fills options of `app` that were not given on the command line. Unknown keys are errors.
void apply_config(CLI::App& app, const std::string& path);

/// Effective option values, one `key=value` per line, skipping keys in `skip`.
std::string canonical_config(const CLI::App& app, const std::set<std::string>& skip);

/// FNV-1a 64, rendered as 16 hex digits.
std::uint64_t fnv1a(const std::string& text);
std::string fnv1a_hex(const std::string& text);

std::vector<double> parse_doubles(const std::string& csv);
std::vector<int> parse_ints(const std::string& csv);

} // namespace avgeo::cli
