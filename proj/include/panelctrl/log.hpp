#pragma once

#include <string_view>

namespace panelctrl::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

// Threshold from PANELCTRL_LOG (error|warn|info|debug); warn by default.
Level threshold();
void write(Level level, std::string_view msg);

inline void warn(std::string_view msg) { write(Level::warn, msg); }
inline void info(std::string_view msg) { write(Level::info, msg); }
inline void debug(std::string_view msg) { write(Level::debug, msg); }

}  // namespace panelctrl::log
