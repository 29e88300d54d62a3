#pragma once

#include "psc/core.hpp"

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

namespace psc {

// %.9g keeps files compact while exceeding the visual precision of any
// downstream plot; integers print without a trailing exponent.
inline std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Minimal RFC 4180 writer: a header is mandatory, every row must match its
// width, fields holding a comma, quote or newline are wrapped in quotes
// with inner quotes doubled.  Unix line endings throughout.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header)
      : out_(path), columns_(header.size()) {
    if (!out_) throw ConfigError("csv: cannot write " + path);
    if (columns_ == 0) throw ConfigError("csv: header is mandatory");
    write_row(header);
  }

  void row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_)
      throw ConfigError("csv: row width does not match the header");
    write_row(fields);
  }

  static std::string quoted(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    q += '"';
    return q;
  }

 private:
  void write_row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << quoted(fields[i]);
    }
    out_ << '\n';
    if (!out_) throw ConfigError("csv: write failed");
  }

  std::ofstream out_;
  std::size_t columns_;
};

}  // namespace psc
