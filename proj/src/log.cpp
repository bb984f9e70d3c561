#include "onli/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>

namespace onli {

namespace {
std::mutex sink_mutex;
WarningSink current_sink;
std::atomic<std::size_t> warnings{0};
} // namespace

void warn(const std::string& message) {
    ++warnings;
    std::lock_guard lock(sink_mutex);
    if (current_sink) {
        current_sink(message);
    } else {
        std::cerr << "warning: " << message << '\n';
    }
}

WarningSink set_warning_sink(WarningSink sink) {
    std::lock_guard lock(sink_mutex);
    auto previous = std::move(current_sink);
    current_sink = std::move(sink);
    return previous;
}

std::size_t warning_count() { return warnings.load(); }

int thread_limit() {
    const char* env = std::getenv("ONLI_THREADS");
    if (env == nullptr) return 1;
    const int n = std::atoi(env);
    return n > 0 ? n : 1;
}

} // namespace onli
