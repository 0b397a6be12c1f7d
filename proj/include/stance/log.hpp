#pragma once

#include <initializer_list>
#include <iostream>
#include <string>

#include "stance/util.hpp"

namespace stance {

struct LogField {
  std::string key;
  std::string value;
  LogField(std::string k, std::string v) : key(std::move(k)), value(std::move(v)) {}
  LogField(std::string k, const char* v) : key(std::move(k)), value(v) {}
  LogField(std::string k, double v) : key(std::move(k)), value(format_double(v)) {}
  template <typename T>
    requires std::is_integral_v<T>
  LogField(std::string k, T v) : key(std::move(k)), value(std::to_string(v)) {}
};

// Machine-parsable one-line log records on stderr: "stage=... event=... k=v ..."
inline void log_event(const std::string& stage, const std::string& event,
                      std::initializer_list<LogField> fields = {}) {
  std::string line = "stage=" + stage + " event=" + event;
  for (const auto& f : fields) {
    line += ' ';
    line += f.key;
    line += '=';
    if (f.value.find(' ') != std::string::npos) {
      line += '"' + f.value + '"';
    } else {
      line += f.value;
    }
  }
  std::cerr << line << '\n';
}

}  // namespace stance
