#pragma once

#include <stdexcept>
#include <string>

namespace mihash {

// Every failure the library reports carries a short machine-readable code
// ("dimension_mismatch", "bad_magic", ...) next to the human message.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

namespace detail {

[[noreturn]] inline void fail(const std::string& code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, const char* code, const std::string& message) {
    if (!condition) fail(code, message);
}

}  // namespace detail
}  // namespace mihash
