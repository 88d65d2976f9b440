#pragma once

#include <string>
#include <utility>
#include <vector>

namespace pixmamba {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Parses "key = value" lines; '#' starts a comment, blank lines are skipped.
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_value_file(const std::string& path);
// Splits "key=value"; throws ConfigError without '='.
std::pair<std::string, std::string> split_assignment(const std::string& assignment);

bool parse_bool(const std::string& key, const std::string& value);
long long parse_int(const std::string& key, const std::string& value);
double parse_real(const std::string& key, const std::string& value);
std::vector<long long> parse_int_list(const std::string& key, const std::string& value);

}  // namespace pixmamba
