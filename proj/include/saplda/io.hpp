#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "saplda/matrix.hpp"

namespace saplda {

/// Writes to a sibling temp file then renames over `path`.
void write_text_file(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j, int indent = -1);
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Rounds to `digits` significant decimal digits.
double round_significant(double value, int digits = 12);

nlohmann::json matrix_to_json(const Matrix& m, int significant_digits = 0);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace saplda
