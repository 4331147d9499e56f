#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace venomguard::csv {

// One record with the 1-based line number it started on.
struct Record {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

// Comma-delimited, optional double-quote quoting with "" escapes, LF or CRLF
// line ends. Blank lines are skipped.
std::vector<Record> parse(std::string_view text);

std::vector<Record> read_file(const std::filesystem::path& path);

// Checks the first record against `expected` and returns the remaining ones.
std::vector<Record> expect_header(std::vector<Record> records,
                                  const std::vector<std::string>& expected,
                                  const std::filesystem::path& source);

std::string quote_if_needed(std::string_view field);

long long parse_int(std::string_view text, std::size_t line, std::string_view column);
double parse_double(std::string_view text, std::size_t line, std::string_view column);

}  // namespace venomguard::csv
