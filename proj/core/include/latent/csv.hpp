#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "latent/numerics.hpp"

namespace latent {

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

/// Parses a decimal produced by format_double (or any strtod-compatible text).
double parse_double(const std::string& text);

/// One CSV row per vector, optional trailing integer column.
void write_matrix_csv(std::ostream& out, const std::vector<std::string>& header,
                      const std::vector<Vector>& rows,
                      const std::vector<long>* trailing = nullptr);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace latent
