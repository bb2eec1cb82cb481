#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bosonlab/spectral.hpp"

namespace bl::io {

namespace fs = std::filesystem;

// RFC 4180 table: CRLF records, fields quoted when they hold a comma, quote or line break.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    CsvWriter& row(const std::vector<std::string>& cells);
    CsvWriter& row(const std::vector<double>& values);
    std::string str() const { return out_; }
    std::size_t columns() const { return cols_; }

private:
    std::size_t cols_;
    std::string out_;
};

std::string csv_escape(const std::string& cell);
std::string fmt(double v);  // shortest round-trip decimal
// Parse an RFC 4180 document (quoted fields, CRLF or LF).
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

// Field snapshot layout, all little-endian:
//   char[4] "BLFD", u32 version = 1, u32 d, u32 rank, u32 n, f64 L, f64 t,
//   then n^(d rank) complex values as (re, im) f64 pairs, row-major, first axis slowest.
inline constexpr char kFieldMagic[4] = {'B', 'L', 'F', 'D'};
inline constexpr std::uint32_t kFieldVersion = 1;
std::string encode_field(const Field& f, double t);
Field decode_field(const std::string& bytes, double* t = nullptr);

std::string sha256_hex(const std::string& bytes);
std::string read_file(const fs::path& p);
void write_file(const fs::path& p, const std::string& bytes);
std::string utc_timestamp();  // ISO 8601, second resolution

}  // namespace bl::io
