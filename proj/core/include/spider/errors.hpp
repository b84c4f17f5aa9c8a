#pragma once

#include <stdexcept>
#include <string>

namespace spider {

// Error taxonomy shared across the library. The CLI maps these onto its
// exit codes: IoError -> 3, ConfigError/ValidationError -> 4.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : IoError {
    explicit FormatError(const std::string& msg) : IoError(msg) {}
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct GeometryError : std::runtime_error {
    explicit GeometryError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite value produced by a numeric kernel.
struct DiagnosticsError : std::runtime_error {
    explicit DiagnosticsError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace spider
