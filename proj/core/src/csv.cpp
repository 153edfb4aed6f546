#include "latent/csv.hpp"

#include <array>
#include <charconv>
#include <cstdlib>
#include <ostream>
#include <sstream>

namespace latent {

std::string format_double(double value) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), res.ptr);
}

double parse_double(const std::string& text) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && *first == ' ') ++first;
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr == first) {
    throw Error(ErrorCode::kUnsupportedFormat, "not a number: '" + text + "'");
  }
  return value;
}

void write_matrix_csv(std::ostream& out, const std::vector<std::string>& header,
                      const std::vector<Vector>& rows, const std::vector<long>* trailing) {
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Eigen::Index j = 0; j < rows[r].size(); ++j) {
      out << (j ? "," : "") << format_double(rows[r][j]);
    }
    if (trailing != nullptr) out << ',' << (*trailing)[r];
    out << '\n';
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace latent
