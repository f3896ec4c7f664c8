#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "mest/core.hpp"

namespace mest {

/// Doubles rendered with 17 significant digits round-trip losslessly.
inline std::string csv_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Minimal comma-separated writer with a mandatory header row.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header)
      : out_(path) {
    if (!out_) throw Error("cannot open " + path + " for writing");
    write_strings(header);
  }

  void write_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  void write(const std::vector<double>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out_ << ',';
      out_ << csv_double(cells[i]);
    }
    out_ << '\n';
  }

  /// Row with a leading label column (e.g. a sensor kind).
  void write_labeled(const std::string& label, const std::vector<double>& cells) {
    out_ << label;
    for (double c : cells) out_ << ',' << csv_double(c);
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace mest
