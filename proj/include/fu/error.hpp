#pragma once

#include <stdexcept>
#include <string>

namespace fu {

// Bad argument to an operation: shape mismatch, empty set, unknown id.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed or truncated file, bad magic, version mismatch.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid experiment configuration. `key()` names the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& what)
        : std::runtime_error("config key '" + key + "': " + what), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

// Requested unlearning method cannot serve the given forget request.
class CapabilityError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace fu
