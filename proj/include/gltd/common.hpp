#pragma once

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace gltd {

// Bad user input: unreadable files, malformed configs, invalid CLI values.
// The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Violated precondition or internal invariant. Exit code 1 at the CLI.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void check(bool ok, const std::string& msg) {
    if (!ok) throw Error(msg);
}

inline void check_config(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

// Worker cap for embarrassingly parallel evaluation passes. GLTD_THREADS
// unset or invalid means single-threaded.
inline std::size_t worker_count() {
    const char* env = std::getenv("GLTD_THREADS");
    if (!env) return 1;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || n < 1) return 1;
    return static_cast<std::size_t>(n);
}

}  // namespace gltd
