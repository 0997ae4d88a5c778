#pragma once

#include <stdexcept>
#include <string>

namespace lumeneit {

// Error categories raised by the toolkit. All derive from std::runtime_error so
// callers that do not care about the category can catch one type.

class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MeshingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParameterError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, double residual = 0.0)
        : std::runtime_error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace lumeneit
