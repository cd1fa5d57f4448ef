#pragma once

#include <string_view>

namespace mwpcl::log {

enum class Level { Debug, Info, Warn, Error, Off };

void set_level(Level level);
Level level();
void warn(std::string_view message);
void info(std::string_view message);

}  // namespace mwpcl::log
