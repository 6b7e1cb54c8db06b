#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ssdiff/error.hpp"

namespace ssdiff {

/// Plain-text table shared by traces, metric reports and sweeps:
///
///   # <title>
///   # key=value            (zero or more metadata lines)
///   col_a<TAB>col_b ...
///   v_a<TAB>v_b ...
///
/// Reals print with %.9g; +inf as "inf"; missing values as "nan".
struct Table {
  std::string title;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  static std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
  }
  static std::string num(std::optional<double> v) { return v ? num(*v) : "nan"; }

  void add_row(std::vector<std::string> row) {
    if (row.size() != columns.size()) throw std::logic_error("table row width does not match header");
    rows.push_back(std::move(row));
  }

  void write(std::ostream& out) const {
    out << "# " << title << '\n';
    for (const auto& [k, v] : meta) out << "# " << k << '=' << v << '\n';
    write_line(out, columns);
    for (const auto& r : rows) write_line(out, r);
  }

  std::string str() const {
    std::ostringstream s;
    write(s);
    return s.str();
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    write(out);
    if (!out) throw IoError("write failed: " + path.string());
  }

  static Table parse(std::istream& in) {
    Table t;
    std::string line;
    bool header_done = false;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (!header_done && line.rfind("# ", 0) == 0) {
        const auto body = line.substr(2);
        const auto eq = body.find('=');
        if (t.title.empty() && t.meta.empty() && eq == std::string::npos) {
          t.title = body;
        } else if (eq != std::string::npos) {
          t.meta.emplace_back(body.substr(0, eq), body.substr(eq + 1));
        }
        continue;
      }
      auto cells = split(line);
      if (!header_done) {
        t.columns = std::move(cells);
        header_done = true;
      } else {
        t.rows.push_back(std::move(cells));
      }
    }
    return t;
  }

  std::optional<std::string> meta_value(const std::string& key) const {
    for (const auto& [k, v] : meta) {
      if (k == key) return v;
    }
    return std::nullopt;
  }

 private:
  static void write_line(std::ostream& out, const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) out << '\t';
      out << cells[k];
    }
    out << '\n';
  }

  static std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      cells.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    return cells;
  }
};

}  // namespace ssdiff
