#include "mge/csv.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace mge {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_rational(const Rational& r) { return r.str(); }

void emit_csv(const std::string& path, const std::vector<std::string>& header,
              const std::vector<std::vector<std::string>>& rows) {
  if (header.empty()) throw std::runtime_error("emit_csv: empty header");
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].size() != header.size())
      throw std::runtime_error("emit_csv '" + path + "': row " + std::to_string(i) +
                               " has " + std::to_string(rows[i].size()) + " cells, header has " +
                               std::to_string(header.size()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("emit_csv '" + path + "': cannot open for writing");
  const auto write_row = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  };
  write_row(header);
  for (const auto& row : rows) write_row(row);
  if (!out) throw std::runtime_error("emit_csv '" + path + "': write failed");
}

}  // namespace mge
