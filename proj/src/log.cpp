#include "pfl/log.hpp"

#include <cstdio>
#include <mutex>

namespace pfl::log {

namespace {

std::mutex mutex;
Level min_level = Level::info;

void stderr_sink(Level level, const std::string& msg) {
    static const char* const tags[] = {"debug", "info", "warn"};
    std::fprintf(stderr, "[%s] %s\n", tags[static_cast<int>(level)], msg.c_str());
}

Sink& sink() {
    static Sink s = stderr_sink;
    return s;
}

void emit(Level level, const std::string& msg) {
    std::lock_guard lock(mutex);
    if (level < min_level || !sink()) {
        return;
    }
    sink()(level, msg);
}

}  // namespace

Sink set_sink(Sink s) {
    std::lock_guard lock(mutex);
    Sink old = std::move(sink());
    sink() = std::move(s);
    return old;
}

void set_min_level(Level level) {
    std::lock_guard lock(mutex);
    min_level = level;
}

void debug(const std::string& msg) { emit(Level::debug, msg); }
void info(const std::string& msg) { emit(Level::info, msg); }
void warn(const std::string& msg) { emit(Level::warn, msg); }

}  // namespace pfl::log
