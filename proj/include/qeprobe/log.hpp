#pragma once

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <memory>
#include <string>

namespace qeprobe {

/// Shared stderr logger. QEPROBE_LOG selects the level (trace, debug, info,
/// warn, error, critical, off); default is info.
inline spdlog::logger& log() {
  static std::shared_ptr<spdlog::logger> logger = [] {
    auto l = spdlog::get("qeprobe");
    if (!l) l = spdlog::stderr_color_mt("qeprobe");
    l->set_pattern("[%l] %v");
    const char* env = std::getenv("QEPROBE_LOG");
    l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
    return l;
  }();
  return *logger;
}

}  // namespace qeprobe
