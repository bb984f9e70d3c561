#pragma once

#include <functional>
#include <string>

namespace onli {

using WarningSink = std::function<void(const std::string&)>;

// Emit a warning. Goes to stderr unless a sink has been installed.
void warn(const std::string& message);

// Replace the warning sink; returns the previous one. Passing an empty
// function restores the stderr default.
WarningSink set_warning_sink(WarningSink sink);

// Number of warnings emitted since process start.
std::size_t warning_count();

// Intra-op thread cap read from ONLI_THREADS (defaults to 1).
int thread_limit();

} // namespace onli
