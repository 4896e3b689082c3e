#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "big/cmdp.hpp"
#include "big/error.hpp"

namespace big {

namespace detail {

inline std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

inline std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(trim(text.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

/// Shortest decimal text that parses back to exactly `x`.
inline std::string format_double(double x) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, result.ptr);
}

inline double parse_double(const std::string& text, const std::string& context) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc() || result.ptr != end)
    throw Error(ErrorCode::kConfig, context + ": cannot parse number '" + text + "'");
  return value;
}

inline long long parse_int(const std::string& text, const std::string& context) {
  long long value = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc() || result.ptr != end)
    throw Error(ErrorCode::kConfig, context + ": cannot parse integer '" + text + "'");
  return value;
}

/// Flat `key = value` configuration with `#` comments.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::string_view text, const std::string& origin = "<config>") {
    KeyValueConfig config;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string stripped = detail::trim(line);
      if (stripped.empty()) continue;
      const auto eq = stripped.find('=');
      if (eq == std::string::npos)
        throw Error(ErrorCode::kConfig,
                    origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
      const std::string key = detail::trim(std::string_view(stripped).substr(0, eq));
      if (key.empty())
        throw Error(ErrorCode::kConfig, origin + ":" + std::to_string(line_no) + ": empty key");
      config.values_[key] = detail::trim(std::string_view(stripped).substr(eq + 1));
    }
    return config;
  }

  static KeyValueConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kConfig, "cannot open config file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path.string());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  const std::string& get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw Error(ErrorCode::kConfig, "missing required key '" + key + "'");
    return it->second;
  }
  std::string get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
  }
  double get_double(const std::string& key) const { return parse_double(get(key), key); }
  double get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }
  long long get_int(const std::string& key) const { return parse_int(get(key), key); }
  long long get_int_or(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
  }
  bool get_bool_or(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error(ErrorCode::kConfig, key + ": expected a boolean, got '" + v + "'");
  }
  std::vector<double> get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : detail::split(get(key), ','))
      if (!item.empty()) out.push_back(parse_double(item, key));
    return out;
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

  std::string serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
    return os.str();
  }

 private:
  std::map<std::string, std::string> values_;
};

/// Minimal CSV table: a header row and string cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::kIo, "CSV has no column '" + name + "'");
    return static_cast<int>(it - header.begin());
  }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split(line, ',');
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != table.header.size())
        throw Error(ErrorCode::kIo, path.string() + ": ragged row '" + line + "'");
      table.rows.push_back(std::move(cells));
    }
  }
  if (first) throw Error(ErrorCode::kIo, path.string() + ": missing header");
  return table;
}

/// Streams rows to a CSV file; every value is written in round-trip form.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : out_(path) {
    if (!out_) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    write_row(header);
  }

  template <typename... Cells>
  void row(const Cells&... cells) {
    std::vector<std::string> text;
    (text.push_back(to_cell(cells)), ...);
    write_row(text);
  }

 private:
  static std::string to_cell(const std::string& s) { return s; }
  static std::string to_cell(const char* s) { return s; }
  static std::string to_cell(double x) { return format_double(x); }
  static std::string to_cell(int x) { return std::to_string(x); }
  static std::string to_cell(long x) { return std::to_string(x); }
  static std::string to_cell(long long x) { return std::to_string(x); }
  static std::string to_cell(unsigned long x) { return std::to_string(x); }
  static std::string to_cell(unsigned long long x) { return std::to_string(x); }

  void write_row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

  std::ofstream out_;
};

/// Loads a transition kernel from CSV columns `s,a,theta,s_next,prob` into an
/// MDP whose dimensions are already set. Unlisted entries stay zero.
inline void load_transition_csv(const std::filesystem::path& path, ContextualMdp& mdp) {
  const CsvTable table = read_csv(path);
  const int cs = table.column("s"), ca = table.column("a"), ct = table.column("theta"),
            cn = table.column("s_next"), cp = table.column("prob");
  std::fill(mdp.transition.begin(), mdp.transition.end(), 0.0);
  for (const auto& row : table.rows) {
    const int s = static_cast<int>(parse_int(row[cs], "s"));
    const int a = static_cast<int>(parse_int(row[ca], "a"));
    const int theta = static_cast<int>(parse_int(row[ct], "theta"));
    const int next = static_cast<int>(parse_int(row[cn], "s_next"));
    mdp.check_state(s);
    mdp.check_action(a);
    mdp.check_context(theta);
    mdp.check_state(next);
    mdp.set_prob(s, a, theta, next, parse_double(row[cp], "prob"));
  }
}

inline void write_transition_csv(const std::filesystem::path& path, const ContextualMdp& mdp) {
  CsvWriter out(path, {"s", "a", "theta", "s_next", "prob"});
  for (int theta = 0; theta < mdp.num_contexts; ++theta)
    for (int s = 0; s < mdp.num_states; ++s)
      for (int a = 0; a < mdp.num_actions; ++a)
        for (int n = 0; n < mdp.num_states; ++n)
          if (const double p = mdp.prob(s, a, theta, n); p != 0.0) out.row(s, a, theta, n, p);
}

}  // namespace big
