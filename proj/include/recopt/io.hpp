#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace recopt::io {

/// One parsed CSV file: header plus rows of raw string fields.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a column by name, or -1.
    int column(std::string_view name) const;
};

/// Reads a comma separated file with optional double-quoted fields.
/// Throws std::runtime_error if the file cannot be opened or is empty.
CsvTable read_csv(const std::filesystem::path& path);

/// Quotes a field only when it contains a comma, quote or newline.
std::string csv_field(std::string_view s);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(std::string_view bytes);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace recopt::io
