#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdlib>
#include <type_traits>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pintent/common.hpp"

namespace pintent {

/// `key = value` lines; '#' starts a comment. Lists are comma-separated and
/// matrix rows are separated by ';'.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text) {
    KeyValueConfig cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto nl = text.find('\n', pos);
      std::string line(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
      pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw Error(Errc::InvalidConfig, "expected 'key = value'", line_no);
      auto key = trim(line.substr(0, eq));
      if (key.empty()) throw Error(Errc::InvalidConfig, "empty key", line_no);
      cfg.values_[key] = trim(line.substr(eq + 1));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(Errc::Io, "cannot open config " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }

  const std::string& raw(const std::string& key) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) throw Error(Errc::InvalidConfig, "missing key '" + key + "'");
    return it->second;
  }

  template <class T>
  void read(const std::string& key, T& out) const {
    if (!has(key)) return;
    out = convert<T>(key, raw(key));
  }

  template <class T>
  void read_list(const std::string& key, std::vector<T>& out) const {
    if (!has(key)) return;
    out.clear();
    for (const auto& item : split(raw(key), ',')) out.push_back(convert<T>(key, item));
  }

  template <class T, std::size_t N>
  void read_array(const std::string& key, std::array<T, N>& out) const {
    if (!has(key)) return;
    std::vector<T> v;
    read_list(key, v);
    if (v.size() != N) {
      throw Error(Errc::InvalidConfig, "key '" + key + "' needs " + std::to_string(N) + " values, got " +
                                           std::to_string(v.size()));
    }
    std::copy(v.begin(), v.end(), out.begin());
  }

  template <class T, std::size_t N>
  void read_matrix(const std::string& key, std::array<std::array<T, N>, N>& out) const {
    if (!has(key)) return;
    const auto rows = split(raw(key), ';');
    if (rows.size() != N) throw Error(Errc::InvalidConfig, "key '" + key + "' needs " + std::to_string(N) + " rows");
    for (std::size_t r = 0; r < N; ++r) {
      const auto cells = split(rows[r], ',');
      if (cells.size() != N) throw Error(Errc::InvalidConfig, "key '" + key + "' row " + std::to_string(r) + " needs " + std::to_string(N) + " values");
      for (std::size_t c = 0; c < N; ++c) out[r][c] = convert<T>(key, cells[c]);
    }
  }

  /// Keys present in the file but never read.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
      if (!used_.count(k)) out.push_back(k);
    }
    return out;
  }

  static std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
  }

  static std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::size_t start = 0;
    while (true) {
      const auto p = s.find(sep, start);
      out.push_back(trim(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start)));
      if (p == std::string_view::npos) break;
      start = p + 1;
    }
    return out;
  }

 private:
  template <class T>
  static T convert(const std::string& key, const std::string& text) {
    auto bad = [&] { return Error(Errc::InvalidConfig, "key '" + key + "': cannot parse '" + text + "'"); };
    if constexpr (std::is_same_v<T, std::string>) {
      return text;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
      if (text == "false" || text == "0" || text == "off" || text == "no") return false;
      throw bad();
    } else if constexpr (std::is_enum_v<T>) {
      if (auto v = parse_enum<T>(text)) return *v;
      throw bad();
    } else if constexpr (std::is_floating_point_v<T>) {
      // strtod accepts exponents and is locale-independent for "C".
      char* end = nullptr;
      const double v = std::strtod(text.c_str(), &end);
      if (text.empty() || end != text.c_str() + text.size()) throw bad();
      return static_cast<T>(v);
    } else {
      T v{};
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size()) throw bad();
      return v;
    }
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace pintent
