#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace panelctrl::io {

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// Splits one CSV record. Double-quoted fields may contain commas; "" is an
// escaped quote. Surrounding whitespace of unquoted fields is trimmed.
std::vector<std::string> split_csv_line(std::string_view line);

// Quotes a field when it needs CSV escaping.
std::string csv_field(std::string_view s);

// Parses the whole string as a finite double; false on trailing garbage.
bool parse_double(std::string_view s, double& out);

void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

// Dense matrix as CSV with a header row; rows labelled by the first column.
void write_matrix_csv(std::ostream& os, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& row_labels,
                      const std::vector<std::string>& col_labels,
                      std::string_view corner = "unit");

}  // namespace panelctrl::io
