#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace stance {

// Shortest decimal representation that round-trips the exact double.
std::string format_double(double v);

bool parse_double(std::string_view s, double& out);
bool parse_i64(std::string_view s, std::int64_t& out);
bool parse_u64(std::string_view s, std::uint64_t& out);

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64_file(const std::string& path);
std::string to_hex(std::uint64_t v);

std::vector<std::string> split(std::string_view s, char delim);
std::string_view trim(std::string_view s);

// days since 1970-01-01 for a proleptic Gregorian civil date
std::int64_t days_from_civil(int y, unsigned m, unsigned d);

// Accepts integer epoch seconds, "YYYY-MM-DD" or "YYYY-MM-DDTHH:MM:SS" (UTC).
std::int64_t parse_time_utc(const std::string& s);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

}  // namespace stance
