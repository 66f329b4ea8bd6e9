#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace drivestyle {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

// Threshold comes from DRIVESTYLE_LOG (error|warn|info|debug), default warn.
inline LogLevel log_threshold() {
  static const LogLevel level = [] {
    const char* env = std::getenv("DRIVESTYLE_LOG");
    if (env == nullptr) return LogLevel::warn;
    const std::string_view v(env);
    if (v == "error") return LogLevel::error;
    if (v == "warn") return LogLevel::warn;
    if (v == "info") return LogLevel::info;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::warn;
  }();
  return level;
}

inline void log(LogLevel level, const std::string& message) {
  if (level > log_threshold()) return;
  const char* tag = "warn";
  switch (level) {
    case LogLevel::error: tag = "error"; break;
    case LogLevel::warn: tag = "warn"; break;
    case LogLevel::info: tag = "info"; break;
    case LogLevel::debug: tag = "debug"; break;
  }
  std::cerr << '[' << tag << "] " << message << '\n';
}

}  // namespace drivestyle
