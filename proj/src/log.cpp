#include "mwpcl/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace mwpcl::log {

namespace {
std::atomic<Level> g_level{Level::Info};
std::mutex g_mutex;

void emit(Level at, const char* tag, std::string_view message) {
  if (at < g_level.load()) return;
  std::lock_guard lock(g_mutex);
  std::cerr << '[' << tag << "] " << message << '\n';
}
}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level.load(); }
void warn(std::string_view message) { emit(Level::Warn, "warn", message); }
void info(std::string_view message) { emit(Level::Info, "info", message); }

}  // namespace mwpcl::log
