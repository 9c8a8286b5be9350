// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace causalbeam::textio {

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);

double parse_double(std::string_view s, std::size_t line);
std::int64_t parse_int(std::string_view s, std::size_t line);
std::uint64_t parse_uint(std::string_view s, std::size_t line);

std::vector<std::string_view> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

/// Line reader that tracks 1-based line numbers for error reporting.
class LineReader {
  public:
    explicit LineReader(std::string text);

    /// False at end of input.
    bool next(std::string_view &line);
    std::size_t line_number() const noexcept { return line_no_; }

    /// Reads the next line or throws ParseError("unexpected end of file").
    std::string_view expect_line();

    /// Reads a "key value" line and returns the value; throws if key differs.
    std::string_view expect_field(std::string_view key);

  private:
    std::string text_;
    std::size_t pos_ = 0;
    std::size_t line_no_ = 0;
};

std::string read_file(const std::string &path);
/// Writes via a temporary file and rename, so readers never see a partial file.
void write_file(const std::string &path, const std::string &content);

} // namespace causalbeam::textio
