#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace uqnav {

/// A caller broke a documented precondition (wrong dimension, bad config, ...).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A NaN or infinity showed up inside a network evaluation.
class NonFiniteError : public std::runtime_error {
public:
    NonFiniteError(std::size_t layer, const std::string& what)
        : std::runtime_error(what + " (layer " + std::to_string(layer) + ")"), layer_(layer) {}

    std::size_t layer() const noexcept { return layer_; }

private:
    std::size_t layer_;
};

/// A pipeline stage needs a file that is not there.
class MissingArtifact : public std::runtime_error {
public:
    explicit MissingArtifact(const std::string& path)
        : std::runtime_error("missing artifact: " + path), path_(path) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace uqnav
