#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace adfl {

// Shortest decimal that round-trips the exact double (std::to_chars).
std::string format_double(double v);

double parse_double(const std::string& s);
long long parse_int(const std::string& s);

std::vector<std::string> split_csv_line(const std::string& line);

// Reads all non-empty lines; first line is returned separately as the header.
struct CsvFile {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};
CsvFile read_csv(const std::string& path);

// FNV-1a over the raw little-endian bytes of a parameter vector; used for
// model-identity tracking in trace logs.
uint64_t hash_params(std::span<const double> params);

}  // namespace adfl
