#include "panelctrl/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace panelctrl::log {

namespace {

Level parse_level(const char* s) {
  if (!s) return Level::warn;
  const std::string v(s);
  if (v == "error" || v == "0") return Level::error;
  if (v == "info" || v == "2") return Level::info;
  if (v == "debug" || v == "3") return Level::debug;
  return Level::warn;
}

constexpr const char* kNames[] = {"error", "warn", "info", "debug"};

}  // namespace

Level threshold() {
  static const Level level = parse_level(std::getenv("PANELCTRL_LOG"));
  return level;
}

void write(Level level, std::string_view msg) {
  if (static_cast<int>(level) > static_cast<int>(threshold())) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[panelctrl " << kNames[static_cast<int>(level)] << "] " << msg << '\n';
}

}  // namespace panelctrl::log
