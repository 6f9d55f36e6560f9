#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace confusable::log {

enum class Level { Error = 0, Info = 1, Debug = 2 };

inline Level threshold() {
  static Level lvl = [] {
    const char* env = std::getenv("CONFUSABLE_LOG");
    if (!env) return Level::Error;
    std::string s(env);
    if (s == "debug") return Level::Debug;
    if (s == "info") return Level::Info;
    return Level::Error;
  }();
  return lvl;
}

inline void write(Level lvl, const std::string& msg) {
  if (static_cast<int>(lvl) <= static_cast<int>(threshold())) {
    const char* tag = lvl == Level::Error ? "error" : lvl == Level::Info ? "info" : "debug";
    std::cerr << "[" << tag << "] " << msg << "\n";
  }
}

inline void error(const std::string& msg) { write(Level::Error, msg); }
inline void info(const std::string& msg) { write(Level::Info, msg); }
inline void debug(const std::string& msg) { write(Level::Debug, msg); }

}  // namespace confusable::log
