#pragma once

#include <iostream>
#include <mutex>
#include <string_view>

namespace agepred::log {

inline bool& quiet() {
  static bool q = false;
  return q;
}

inline std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

inline void warn(std::string_view msg) {
  if (quiet()) return;
  std::lock_guard<std::mutex> lock(sink_mutex());
  std::cerr << "[warn] " << msg << '\n';
}

inline void info(std::string_view msg) {
  if (quiet()) return;
  std::lock_guard<std::mutex> lock(sink_mutex());
  std::cerr << "[info] " << msg << '\n';
}

}  // namespace agepred::log
