#pragma once

#include <iostream>
#include <sstream>
#include <string>

namespace severe {

// Progress messages go to stderr when enabled; quiet by default.
inline bool& verbose_flag() {
  static bool on = false;
  return on;
}

template <class... Args>
void log_info(const Args&... args) {
  if (!verbose_flag()) return;
  std::ostringstream os;
  (os << ... << args);
  std::cerr << "[severe] " << os.str() << '\n';
}

}  // namespace severe
