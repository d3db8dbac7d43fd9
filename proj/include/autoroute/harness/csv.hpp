#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace autoroute::harness {

/// Shortest decimal that parses back to the identical double.
std::string format_double(double v);
double parse_double(const std::string& s);

/// Minimal CSV: comma separated, no quoting. Fields never contain commas here
/// (action keys use ':' and '|').
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;
    double number(std::size_t row, const std::string& name) const;
};

std::string to_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace autoroute::harness
