#include "mma/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mma/error.hpp"

namespace mma {

std::string serialize_key_values(const KeyValueMap& entries) {
  std::string out;
  for (const auto& [key, value] : entries) {
    out += key;
    out += "=";
    out += value;
    out += "\n";
  }
  return out;
}

KeyValueMap parse_key_values(const std::string& text, const std::string& origin) {
  KeyValueMap map;
  std::istringstream stream(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    std::size_t begin = line.find_first_not_of(" \t");
    if (begin == std::string::npos) continue;
    std::size_t end = line.find_last_not_of(" \t");
    line = line.substr(begin, end - begin + 1);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(origin + ":" + std::to_string(line_no) +
                  ": expected 'key=value', found '" + line + "'");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    while (!value.empty() && (value.front() == ' ' || value.front() == '\t'))
      value.erase(value.begin());
    if (key.empty())
      throw Error(origin + ":" + std::to_string(line_no) + ": empty key");
    if (!map.emplace(key, value).second)
      throw Error(origin + ":" + std::to_string(line_no) + ": duplicate key '" +
                  key + "'");
  }
  return map;
}

KeyValueMap load_key_value_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open config file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_key_values(buffer.str(), path);
}

namespace {

const std::string& require(const KeyValueMap& map, const std::string& key) {
  auto it = map.find(key);
  if (it == map.end()) throw Error("config: missing required key '" + key + "'");
  return it->second;
}

long parse_long(const std::string& value, const std::string& key) {
  long out = 0;
  const char* begin = value.data();
  const char* end = value.data() + value.size();
  auto result = std::from_chars(begin, end, out);
  if (result.ec != std::errc() || result.ptr != end)
    throw Error("config: key '" + key + "' is not an integer: '" + value + "'");
  return out;
}

double parse_double(const std::string& value, const std::string& key) {
  double out = 0.0;
  const char* begin = value.data();
  const char* end = value.data() + value.size();
  auto result = std::from_chars(begin, end, out);
  if (result.ec != std::errc() || result.ptr != end)
    throw Error("config: key '" + key + "' is not a real number: '" + value + "'");
  return out;
}

}  // namespace

long get_int(const KeyValueMap& map, const std::string& key) {
  return parse_long(require(map, key), key);
}

long get_int(const KeyValueMap& map, const std::string& key, long fallback) {
  auto it = map.find(key);
  return it == map.end() ? fallback : parse_long(it->second, key);
}

double get_real(const KeyValueMap& map, const std::string& key) {
  return parse_double(require(map, key), key);
}

double get_real(const KeyValueMap& map, const std::string& key, double fallback) {
  auto it = map.find(key);
  return it == map.end() ? fallback : parse_double(it->second, key);
}

std::string get_string(const KeyValueMap& map, const std::string& key) {
  return require(map, key);
}

std::string get_string(const KeyValueMap& map, const std::string& key,
                       const std::string& fallback) {
  auto it = map.find(key);
  return it == map.end() ? fallback : it->second;
}

std::vector<long> get_int_list(const KeyValueMap& map, const std::string& key) {
  std::vector<long> out;
  for (const auto& item : split_list(require(map, key)))
    out.push_back(parse_long(item, key));
  return out;
}

std::vector<double> get_real_list(const KeyValueMap& map, const std::string& key) {
  std::vector<double> out;
  for (const auto& item : split_list(require(map, key)))
    out.push_back(parse_double(item, key));
  return out;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string current;
  for (char c : value) {
    if (c == ',') {
      out.push_back(current);
      current.clear();
    } else if (c != ' ' && c != '\t') {
      current += c;
    }
  }
  if (!current.empty() || !out.empty()) out.push_back(current);
  for (const auto& item : out)
    if (item.empty()) throw Error("config: empty element in list '" + value + "'");
  return out;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += items[i];
  }
  return out;
}

std::string format_real_full(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

}  // namespace mma
