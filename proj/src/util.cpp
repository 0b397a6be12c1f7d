#include "stance/util.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "stance/error.hpp"

namespace stance {

std::string format_double(double v) {
  char buf[40];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

bool parse_double(std::string_view s, double& out) {
  auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

bool parse_i64(std::string_view s, std::int64_t& out) {
  auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

bool parse_u64(std::string_view s, std::uint64_t& out) {
  auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for hashing: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

std::vector<std::string> split(std::string_view s, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(delim, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return static_cast<std::int64_t>(era) * 146097LL + static_cast<std::int64_t>(doe) - 719468LL;
}

std::int64_t parse_time_utc(const std::string& raw) {
  std::string_view s = trim(raw);
  std::int64_t epoch = 0;
  if (parse_i64(s, epoch)) return epoch;
  // YYYY-MM-DD with optional THH:MM:SS
  if (s.size() < 10 || s[4] != '-' || s[7] != '-')
    throw ConfigError("cannot parse date/time: '" + raw + "'");
  std::int64_t y = 0, mo = 0, dy = 0;
  if (!parse_i64(s.substr(0, 4), y) || !parse_i64(s.substr(5, 2), mo) || !parse_i64(s.substr(8, 2), dy) ||
      mo < 1 || mo > 12 || dy < 1 || dy > 31)
    throw ConfigError("cannot parse date: '" + raw + "'");
  std::int64_t secs = days_from_civil(static_cast<int>(y), static_cast<unsigned>(mo), static_cast<unsigned>(dy)) * 86400;
  if (s.size() > 10) {
    if (s.size() != 19 || s[10] != 'T' || s[13] != ':' || s[16] != ':')
      throw ConfigError("cannot parse time: '" + raw + "'");
    std::int64_t hh = 0, mm = 0, ss = 0;
    if (!parse_i64(s.substr(11, 2), hh) || !parse_i64(s.substr(14, 2), mm) || !parse_i64(s.substr(17, 2), ss) ||
        hh > 23 || mm > 59 || ss > 60)
      throw ConfigError("cannot parse time: '" + raw + "'");
    secs += hh * 3600 + mm * 60 + ss;
  }
  return secs;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace stance
