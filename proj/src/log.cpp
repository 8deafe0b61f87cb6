#include "stcorr/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace stcorr::log {

Level threshold() {
    static const Level level = [] {
        const char* env = std::getenv("STCORR_LOG");
        if (env == nullptr) return Level::warn;
        if (std::strcmp(env, "error") == 0) return Level::error;
        if (std::strcmp(env, "warn") == 0) return Level::warn;
        if (std::strcmp(env, "info") == 0) return Level::info;
        if (std::strcmp(env, "debug") == 0) return Level::debug;
        return Level::warn;
    }();
    return level;
}

void message(Level level, const std::string& text) {
    if (level > threshold()) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::fprintf(stderr, "[stcorr:%s] %s\n", names[int(level)], text.c_str());
}

}  // namespace stcorr::log
