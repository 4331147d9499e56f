#include "venomguard/error.hpp"
#include "venomguard/diagnostics.hpp"

#include <iostream>

namespace venomguard {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::Io: return "io error";
        case ErrorCode::Parse: return "parse error";
        case ErrorCode::BadMagic: return "bad magic";
        case ErrorCode::Truncated: return "truncated";
        case ErrorCode::TrailingData: return "trailing data";
        case ErrorCode::NonFinite: return "non-finite value";
        case ErrorCode::Validation: return "validation error";
        case ErrorCode::Argument: return "argument error";
        case ErrorCode::Numeric: return "numeric error";
    }
    return "error";
}

namespace {

std::string decorate(ErrorCode code, const std::string& message,
                     std::optional<std::size_t> line) {
    std::string out = to_string(code);
    if (line) out += " (line " + std::to_string(*line) + ")";
    out += ": ";
    out += message;
    return out;
}

thread_local WarningSink t_sink;

}  // namespace

Error::Error(ErrorCode code, const std::string& message,
             std::optional<std::size_t> line)
    : std::runtime_error(decorate(code, message, line)), code_(code), line_(line) {}

void warn(std::string_view message) {
    if (t_sink) {
        t_sink(message);
        return;
    }
    std::cerr << "warning: " << message << '\n';
}

ScopedWarningSink::ScopedWarningSink(WarningSink sink) : previous_(std::move(t_sink)) {
    t_sink = std::move(sink);
}

ScopedWarningSink::~ScopedWarningSink() { t_sink = std::move(previous_); }

WarningCapture::WarningCapture()
    : guard_([this](std::string_view m) { messages_.emplace_back(m); }) {}

bool WarningCapture::contains(std::string_view needle) const {
    for (const auto& m : messages_) {
        if (m.find(needle) != std::string::npos) return true;
    }
    return false;
}

}  // namespace venomguard
