#pragma once

#include <stdexcept>
#include <string>

namespace daa {

/// Base for every error raised by the library. `kind()` is a short stable tag
/// used by the CLI to produce machine-parsable messages.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& w) : Error("dimension", w) {}
};
struct RangeError : Error {
    explicit RangeError(const std::string& w) : Error("range", w) {}
};
struct ContractError : Error {
    explicit ContractError(const std::string& w) : Error("contract", w) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error("config", w) {}
};
struct FormatError : Error {
    explicit FormatError(const std::string& w) : Error("format", w) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& w) : Error("numeric", w) {}
};
struct IoError : Error {
    explicit IoError(const std::string& w) : Error("io", w) {}
};

}  // namespace daa
