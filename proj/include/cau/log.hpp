#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace cau {

enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

// Level comes from CAU_LOG (info|debug); anything else means quiet.
inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("CAU_LOG");
        if (env == nullptr) return LogLevel::kQuiet;
        if (std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
        if (std::strcmp(env, "info") == 0) return LogLevel::kInfo;
        return LogLevel::kQuiet;
    }();
    return level;
}

inline void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::kInfo) {
        std::fprintf(stderr, "[info] %s\n", msg.c_str());
        std::fflush(stderr);
    }
}

inline void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::kDebug) {
        std::fprintf(stderr, "[debug] %s\n", msg.c_str());
        std::fflush(stderr);
    }
}

} // namespace cau
