#pragma once

#include <functional>
#include <string>

namespace pfl::log {

enum class Level { debug, info, warn };

using Sink = std::function<void(Level, const std::string&)>;

// Replaces the process-wide sink (stderr by default). Returns the previous one.
Sink set_sink(Sink sink);
void set_min_level(Level level);

void debug(const std::string& msg);
void info(const std::string& msg);
void warn(const std::string& msg);

}  // namespace pfl::log
