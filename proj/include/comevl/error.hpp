#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace comevl {

enum class ErrorKind {
    invalid_shape,
    invalid_value,
    degenerate_distribution,
    no_layers_selected,
    parse,
    io,
    config,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_shape: return "invalid-shape";
        case ErrorKind::invalid_value: return "invalid-value";
        case ErrorKind::degenerate_distribution: return "degenerate-distribution";
        case ErrorKind::no_layers_selected: return "no-layers-selected";
        case ErrorKind::parse: return "parse";
        case ErrorKind::io: return "io";
        case ErrorKind::config: return "config";
    }
    return "unknown";
}

/// Every failure raised by the library. The kind drives CLI exit codes;
/// the message accumulates context prefixes ("stage: layer 3: ...").
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    Error with_context(const std::string& context) const {
        Error e(kind_, context + ": " + what());
        e.position_ = position_;
        return e;
    }

    /// Offending token position for parse errors (0-based), npos otherwise.
    std::size_t position() const noexcept { return position_; }

    static Error parse_at(std::size_t position, const std::string& message) {
        Error e(ErrorKind::parse, "token " + std::to_string(position) + ": " + message);
        e.position_ = position;
        return e;
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    ErrorKind kind_;
    std::size_t position_ = npos;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) fail(kind, message);
}

/// Runs `fn`, re-throwing any library error with `context` prepended.
template <class Fn>
decltype(auto) with_context(const std::string& context, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw e.with_context(context);
    }
}

}  // namespace comevl
