#include "editprop/log.hpp"

#include <cstdio>

namespace editprop {

namespace {

void default_handler(LogLevel level, const std::string& msg) {
    std::fprintf(stderr, "[%s] %s\n", level == LogLevel::Warn ? "warn" : "info", msg.c_str());
}

LogHandler& handler_slot() {
    static LogHandler handler = default_handler;
    return handler;
}

} // namespace

void set_log_handler(LogHandler handler) {
    handler_slot() = handler ? std::move(handler) : LogHandler(default_handler);
}

void log_warn(const std::string& msg) {
    handler_slot()(LogLevel::Warn, msg);
}

void log_info(const std::string& msg) {
    handler_slot()(LogLevel::Info, msg);
}

} // namespace editprop
