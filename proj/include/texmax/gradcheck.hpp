#pragma once

#include <cstdint>
#include <functional>

#include "texmax/tensor.hpp"

namespace texmax {

using ScalarFunction = std::function<double(const Tensor3&)>;

struct GradcheckOptions {
    double step = 1e-5;
    /// Coordinates to test; 0 means all. Sampling is without replacement and never below 64
    /// unless the tensor itself is smaller.
    std::size_t samples = 0;
    std::uint64_t seed = 0;
    /// Optional filter: given the perturbed points x+h*e_i and x-h*e_i, return true to skip
    /// coordinate i (used to step over ReLU/max-pool kinks).
    std::function<bool(const Tensor3& plus, const Tensor3& minus)> skip;
};

struct GradcheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
};

/// Relative error |a - n| / max(1e-8, |a| + |n|).
double relative_error(double analytic, double numeric) noexcept;

/// Compares `analytic` against central differences of `f` at `x`.
/// Throws NumericError if `f` returns a non-finite value.
GradcheckReport gradcheck(const ScalarFunction& f, const Tensor3& analytic, const Tensor3& x,
                          const GradcheckOptions& options = {});

}  // namespace texmax
