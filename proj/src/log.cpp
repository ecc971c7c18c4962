#include "smallgs/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>

namespace smallgs {

namespace {

std::mutex g_sink_mutex;
LogSink g_sink;

}  // namespace

void set_log_sink(LogSink sink) {
    std::lock_guard lock(g_sink_mutex);
    g_sink = std::move(sink);
}

void log_line(LogLevel level, std::string_view json_line) {
    std::lock_guard lock(g_sink_mutex);
    if (g_sink) {
        g_sink(level, json_line);
    } else if (level >= LogLevel::kWarn) {
        std::cerr << json_line << '\n';
    }
}

int default_thread_count() {
    if (const char* env = std::getenv("SMALLGS_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace smallgs
