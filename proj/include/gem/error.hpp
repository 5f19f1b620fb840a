#pragma once

#include <stdexcept>
#include <string>

namespace gem {

// Thrown when an operation produces NaN/Inf. Message names the op.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown by file ingestion on malformed input. Message carries the byte offset.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised by the training loop when the loss goes non-finite.
struct TrainAbort : std::runtime_error {
    explicit TrainAbort(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid or unknown run-configuration content. Message names the key.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gem
