#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "cwkg/common.hpp"

namespace cwkg::detail {

/// Line-oriented reader tracking the 1-based line number and the byte offset
/// at which the current line starts. Strips a trailing '\r'.
class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw PathError("cannot open '" + path.string() + "'");
  }

  bool next(std::string& line) {
    offset_ = next_offset_;
    if (!std::getline(in_, line)) return false;
    next_offset_ += line.size() + 1;
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  std::size_t line_no() const { return line_no_; }
  std::uint64_t offset() const { return offset_; }
  const std::filesystem::path& path() const { return path_; }

  std::string where() const {
    return path_.string() + ":" + std::to_string(line_no_) + " (byte " + std::to_string(offset_) + ")";
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
  std::uint64_t offset_ = 0;
  std::uint64_t next_offset_ = 0;
};

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

/// Splits on runs of ASCII spaces.
inline std::vector<std::string_view> split_spaces(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

}  // namespace cwkg::detail
