#pragma once

#include <functional>
#include <string_view>

namespace smallgs {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3 };

/// Receives one JSON object per call (no trailing newline). With no sink
/// installed, warnings and errors go to stderr and the rest is dropped.
using LogSink = std::function<void(LogLevel, std::string_view)>;

void set_log_sink(LogSink sink);
void log_line(LogLevel level, std::string_view json_line);

/// Worker count for parallel loops: SMALLGS_THREADS if set and positive,
/// otherwise the hardware concurrency.
int default_thread_count();

}  // namespace smallgs
