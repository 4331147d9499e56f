#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace venomguard {

enum class ErrorCode {
    Io,            // file missing or unreadable/unwritable
    Parse,         // malformed CSV / config content
    BadMagic,      // VGF1 header mismatch
    Truncated,     // VGF1 payload shorter than declared
    TrailingData,  // VGF1 payload longer than declared
    NonFinite,     // NaN or Inf where finite values are required
    Validation,    // dangling cross-references in a bundle
    Argument,      // caller violated a precondition
    Numeric,       // non-finite intermediate during computation
};

const char* to_string(ErrorCode code) noexcept;

/// Single exception type for the library. `code` selects the category; `line`
/// is set for parse errors that can be attributed to a line in a text file.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message,
          std::optional<std::size_t> line = std::nullopt);

    ErrorCode code() const noexcept { return code_; }
    std::optional<std::size_t> line() const noexcept { return line_; }

private:
    ErrorCode code_;
    std::optional<std::size_t> line_;
};

[[noreturn]] inline void throw_argument(const std::string& message) {
    throw Error(ErrorCode::Argument, message);
}

}  // namespace venomguard
