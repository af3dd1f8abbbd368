#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mma {

/// Sorted key=value text block: one `key=value` per line, keys unique,
/// lines ordered by key (std::map iteration order). '#' starts a comment.
/// This is the config file format of the CLI and the canonical config
/// serialization embedded in checkpoints.
using KeyValueMap = std::map<std::string, std::string>;

std::string serialize_key_values(const KeyValueMap& entries);
KeyValueMap parse_key_values(const std::string& text,
                             const std::string& origin = "<string>");
KeyValueMap load_key_value_file(const std::string& path);

/// Typed getters; errors name the key and origin. `required` getters throw
/// when the key is missing, the defaulted ones fall back.
long get_int(const KeyValueMap& map, const std::string& key);
long get_int(const KeyValueMap& map, const std::string& key, long fallback);
double get_real(const KeyValueMap& map, const std::string& key);
double get_real(const KeyValueMap& map, const std::string& key, double fallback);
std::string get_string(const KeyValueMap& map, const std::string& key);
std::string get_string(const KeyValueMap& map, const std::string& key,
                       const std::string& fallback);
std::vector<long> get_int_list(const KeyValueMap& map, const std::string& key);
std::vector<double> get_real_list(const KeyValueMap& map, const std::string& key);

std::vector<std::string> split_list(const std::string& value);
std::string join_list(const std::vector<std::string>& items);
std::string format_real_full(double value);  // round-trip precision

}  // namespace mma
