#pragma once

// Verbosity control for the command-line tool. ATNL_LOG selects the level;
// everything goes to stderr so primary outputs stay clean.

#include <cstdlib>
#include <iostream>
#include <string>

#include "atnl/errors.hpp"

namespace atnl::cli {

enum class LogLevel { error = 0, info = 1, debug = 2 };

inline LogLevel log_level_from_text(const std::string& text) {
  if (text == "error") return LogLevel::error;
  if (text == "info") return LogLevel::info;
  if (text == "debug") return LogLevel::debug;
  throw ConfigError("ATNL_LOG must be error, info, or debug, got \"" + text +
                    "\"");
}

inline LogLevel log_level_from_env() {
  const char* raw = std::getenv("ATNL_LOG");
  if (raw == nullptr) return LogLevel::info;
  return log_level_from_text(raw);
}

class Logger {
 public:
  explicit Logger(LogLevel level) : level_(level) {}

  void error(const std::string& m) const { emit(LogLevel::error, m); }
  void info(const std::string& m) const { emit(LogLevel::info, m); }
  void debug(const std::string& m) const { emit(LogLevel::debug, m); }

 private:
  void emit(LogLevel at, const std::string& m) const {
    if (static_cast<int>(at) > static_cast<int>(level_)) return;
    static const char* const names[] = {"error", "info", "debug"};
    std::cerr << '[' << names[static_cast<int>(at)] << "] " << m << '\n';
  }

  LogLevel level_;
};

}  // namespace atnl::cli
