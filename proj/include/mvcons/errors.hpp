#pragma once

#include <stdexcept>
#include <string>

namespace mvcons {

// Shape/width mismatches between tensors or between a tensor and a model.
struct DimensionError : std::invalid_argument {
    explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Invalid settings: bad hyperparameters, malformed config files, unusable CLI
// flag combinations. The CLI maps these to exit code 2.
struct ConfigError : std::invalid_argument {
    explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Problems with datasets or files on disk (missing, unreadable, undecodable).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mvcons
