#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace specgeo {

/// Error codes raised by the library. Each failure mode from file parsing up
/// to numerical breakdown gets its own value so callers can branch on it.
enum class Errc {
    io,
    bad_magic,
    version_mismatch,
    unsupported_dtype,
    truncated_payload,
    length_mismatch,
    invalid_shape,
    non_finite,
    schema,
    dangling_ref,
    hidden_dim_mismatch,
    dimension_mismatch,
    invalid_argument,
    zero_vector,
    not_symmetric,
    singular,
    no_convergence,
};

constexpr std::string_view errc_name(Errc c) noexcept {
    switch (c) {
    case Errc::io: return "io";
    case Errc::bad_magic: return "bad_magic";
    case Errc::version_mismatch: return "version_mismatch";
    case Errc::unsupported_dtype: return "unsupported_dtype";
    case Errc::truncated_payload: return "truncated_payload";
    case Errc::length_mismatch: return "length_mismatch";
    case Errc::invalid_shape: return "invalid_shape";
    case Errc::non_finite: return "non_finite";
    case Errc::schema: return "schema";
    case Errc::dangling_ref: return "dangling_ref";
    case Errc::hidden_dim_mismatch: return "hidden_dim_mismatch";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::zero_vector: return "zero_vector";
    case Errc::not_symmetric: return "not_symmetric";
    case Errc::singular: return "singular";
    case Errc::no_convergence: return "no_convergence";
    }
    return "unknown";
}

/// Numerical failures (exit code 2 in the CLI) as opposed to bad input.
constexpr bool is_numerical(Errc c) noexcept {
    return c == Errc::singular || c == Errc::no_convergence;
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }
    bool numerical() const noexcept { return is_numerical(code_); }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const char* what) {
    if (!cond) fail(code, what);
}

inline void require(bool cond, Errc code, const std::string& what) {
    if (!cond) fail(code, what);
}

} // namespace specgeo
