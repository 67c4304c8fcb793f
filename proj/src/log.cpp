#include "vid/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>

namespace vid {

namespace {

LogLevel parse_env() {
  const char* env = std::getenv("VID_LOG_LEVEL");
  if (!env) return LogLevel::warn;
  const std::string s(env);
  if (s == "error" || s == "0") return LogLevel::error;
  if (s == "warn" || s == "1") return LogLevel::warn;
  if (s == "info" || s == "2") return LogLevel::info;
  if (s == "debug" || s == "3") return LogLevel::debug;
  return LogLevel::warn;
}

std::atomic<int>& level_ref() {
  static std::atomic<int> level{static_cast<int>(parse_env())};
  return level;
}

const char* tag(LogLevel l) {
  switch (l) {
    case LogLevel::error: return "error";
    case LogLevel::warn: return "warn";
    case LogLevel::info: return "info";
    case LogLevel::debug: return "debug";
  }
  return "";
}

}  // namespace

LogLevel log_level() { return static_cast<LogLevel>(level_ref().load()); }

void set_log_level(LogLevel level) { level_ref().store(static_cast<int>(level)); }

void log_message(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > level_ref().load()) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[vid " << tag(level) << "] " << msg << '\n';
}

}  // namespace vid
