#pragma once

#include <functional>
#include <string>

namespace editprop {

enum class LogLevel { Info, Warn };

using LogHandler = std::function<void(LogLevel, const std::string&)>;

// Replaces the process-wide log sink. Default writes to stderr.
// Passing an empty handler restores the default.
void set_log_handler(LogHandler handler);

void log_warn(const std::string& msg);
void log_info(const std::string& msg);

} // namespace editprop
