#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace fsv::io {

// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);

double parse_double(std::string_view text, const std::string& source, std::size_t line);
long long parse_int(std::string_view text, const std::string& source, std::size_t line);

std::vector<std::string_view> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

// Parses a header token of the form "#<key>=<positive integer>".
long long parse_header_value(std::string_view token, std::string_view key,
                             const std::string& source, std::size_t line);

// Line-by-line reader that tracks 1-based line numbers and strips a trailing CR.
class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path);
  bool next(std::string& line);
  std::size_t line_number() const { return line_number_; }
  const std::string& source() const { return source_; }

 private:
  std::ifstream in_;
  std::string source_;
  std::size_t line_number_ = 0;
};

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace fsv::io
