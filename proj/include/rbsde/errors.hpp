#ifndef RBSDE_ERRORS_HPP
#define RBSDE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rbsde {

/// Malformed input: bad shapes, violated preconditions, failed scenario validation.
class InvalidInput : public std::runtime_error {
public:
    explicit InvalidInput(const std::string& what) : std::runtime_error(what) {}
};

/// A requested build exceeds a configured budget (node count, memory).
class ResourceError : public std::runtime_error {
public:
    explicit ResourceError(const std::string& what) : std::runtime_error(what) {}
};

/// Least-squares design matrix lost rank; names the first degenerate feature.
class RegressionError : public std::runtime_error {
public:
    RegressionError(const std::string& what, std::string degenerate_feature)
        : std::runtime_error(what), feature(std::move(degenerate_feature)) {}
    std::string feature;
};

/// An operation was asked of an engine kind that cannot provide it.
class UnsupportedEngine : public std::runtime_error {
public:
    explicit UnsupportedEngine(const std::string& what) : std::runtime_error(what) {}
};

/// Picard iteration failed to contract. Usually means dt is too large for the
/// driver's effective Lipschitz constant.
class NonConvergence : public std::runtime_error {
public:
    NonConvergence(const std::string& what, int layer_index, double last_residual)
        : std::runtime_error(what), layer(layer_index), residual(last_residual) {}
    int layer;        // time layer where the iteration stalled, -1 if not layer-bound
    double residual;  // last sup-norm change between iterates
};

}  // namespace rbsde

#endif  // RBSDE_ERRORS_HPP
