#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace symx {

std::string read_file(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename, so readers never observe a
/// partially written output.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Splits one CSV record. Double-quoted fields may contain commas and
/// doubled quotes; a trailing CR is stripped.
std::vector<std::string> split_csv_line(std::string_view line);

/// Quotes a field only when it contains a comma, quote or newline.
std::string csv_escape(std::string_view field);

std::string trim(std::string_view text);

/// Rounds to 12 significant digits, the precision used in every artifact.
double round_sig12(double value);

/// Fixed-point formatting, e.g. format_fixed(0.12345, 4) == "0.1235".
std::string format_fixed(double value, int decimals);

}  // namespace symx
