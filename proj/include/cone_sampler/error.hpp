#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cone_sampler {

/// Coarse failure taxonomy. Each class maps to one process exit code.
enum class ErrorClass {
    usage,         // bad arguments or violated preconditions
    input_format,  // malformed or inconsistent input data
    infeasible,    // the requested configuration cannot be satisfied
    internal,      // broken invariant or exhausted RNG retries
};

inline constexpr std::string_view to_string(ErrorClass c) noexcept {
    switch (c) {
    case ErrorClass::usage: return "usage";
    case ErrorClass::input_format: return "input-format";
    case ErrorClass::infeasible: return "infeasible-config";
    case ErrorClass::internal: return "internal";
    }
    return "internal";
}

inline constexpr int exit_code(ErrorClass c) noexcept {
    switch (c) {
    case ErrorClass::usage: return 2;
    case ErrorClass::input_format: return 3;
    case ErrorClass::infeasible: return 4;
    case ErrorClass::internal: return 5;
    }
    return 5;
}

/// Library exception. `code()` is a short kebab-case tag ("zero-norm",
/// "label-count-mismatch", ...) that tests and scripts can match on.
class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, std::string code, const std::string& detail)
        : std::runtime_error(code + ": " + detail), class_(cls), code_(std::move(code)) {}

    ErrorClass error_class() const noexcept { return class_; }
    const std::string& code() const noexcept { return code_; }

private:
    ErrorClass class_;
    std::string code_;
};

namespace detail {

[[noreturn]] inline void fail(ErrorClass cls, std::string code, const std::string& detail) {
    throw Error(cls, std::move(code), detail);
}

inline void require(bool ok, std::string code, const std::string& detail) {
    if (!ok) fail(ErrorClass::usage, std::move(code), detail);
}

}  // namespace detail
}  // namespace cone_sampler
