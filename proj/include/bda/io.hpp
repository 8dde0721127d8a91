#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace bda {

// Shortest round-trippable decimal form ("%.17g").
std::string format_real(double value);

// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);

std::string read_file(const std::filesystem::path& path);

std::vector<std::string> split(std::string_view line, char sep);

}  // namespace bda
