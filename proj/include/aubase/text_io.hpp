#pragma once

#include <Eigen/Core>

#include "json.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace aubase {

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);

void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);

/// Headerless single-column CSV, one sample per line.
void write_column_csv(const std::filesystem::path& path, const Eigen::VectorXd& values);
Eigen::VectorXd read_column_csv(const std::filesystem::path& path);

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace aubase
