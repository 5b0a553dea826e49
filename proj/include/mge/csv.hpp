#pragma once

#include <string>
#include <vector>

#include "mge/workunits.hpp"

namespace mge {

// 17 significant digits, enough to round-trip any double exactly.
std::string fmt_double(double v);
std::string fmt_rational(const Rational& r);  // "num/den"

// Writes header and rows with comma separators and \n line endings. Every
// row must match the header width. No quoting: values must not contain
// commas or newlines (all emitters here produce plain numbers and tokens).
void emit_csv(const std::string& path, const std::vector<std::string>& header,
              const std::vector<std::vector<std::string>>& rows);

}  // namespace mge
