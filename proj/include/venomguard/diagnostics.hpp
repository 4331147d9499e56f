#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace venomguard {

using WarningSink = std::function<void(std::string_view)>;

// Emits a warning to the calling thread's sink (stderr when none installed).
void warn(std::string_view message);

// Installs `sink` for the current thread for the lifetime of the guard.
class ScopedWarningSink {
public:
    explicit ScopedWarningSink(WarningSink sink);
    ~ScopedWarningSink();
    ScopedWarningSink(const ScopedWarningSink&) = delete;
    ScopedWarningSink& operator=(const ScopedWarningSink&) = delete;

private:
    WarningSink previous_;
};

// Collects warnings raised on this thread while alive.
class WarningCapture {
public:
    WarningCapture();
    const std::vector<std::string>& messages() const { return messages_; }
    bool contains(std::string_view needle) const;

private:
    std::vector<std::string> messages_;
    ScopedWarningSink guard_;
};

}  // namespace venomguard
