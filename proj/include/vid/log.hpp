#pragma once

#include <string>

namespace vid {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

/// Level from VID_LOG_LEVEL (error|warn|info|debug or 0-3), default warn.
LogLevel log_level();
void set_log_level(LogLevel level);
void log_message(LogLevel level, const std::string& msg);

inline void log_warn(const std::string& msg) { log_message(LogLevel::warn, msg); }
inline void log_info(const std::string& msg) { log_message(LogLevel::info, msg); }
inline void log_debug(const std::string& msg) { log_message(LogLevel::debug, msg); }

}  // namespace vid
