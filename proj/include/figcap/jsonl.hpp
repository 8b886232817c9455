#pragma once

#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "figcap/errors.hpp"

namespace figcap::jsonl {

// Calls fn(json, line_number) for each non-blank line. Parse failures and any
// FormatError thrown by fn are reported with the 1-based line number.
template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    try {
      fn(value, line_no);
    } catch (const CorpusError& e) {
      if (e.line() != 0) throw;
      throw CorpusError(e.what(), line_no);
    } catch (const FormatError& e) {
      if (e.line() != 0) throw;
      throw FormatError(e.what(), line_no);
    }
  }
  if (in.bad()) throw IoError("read error");
}

inline void write_line(std::ostream& out, const nlohmann::json& value) {
  out << value.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace figcap::jsonl
