#pragma once

#include <iostream>
#include <string_view>

namespace dcae::log {

enum class Level { Quiet = 0, Warn = 1, Info = 2 };

inline Level& level() {
  static Level lvl = Level::Warn;
  return lvl;
}

inline void warn(std::string_view msg) {
  if (level() >= Level::Warn) std::cerr << "[warn] " << msg << '\n';
}

inline void info(std::string_view msg) {
  if (level() >= Level::Info) std::cerr << "[info] " << msg << '\n';
}

}  // namespace dcae::log
