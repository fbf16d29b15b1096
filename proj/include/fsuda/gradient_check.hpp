#ifndef FSUDA_GRADIENT_CHECK_HPP
#define FSUDA_GRADIENT_CHECK_HPP

#include "fsuda/autodiff.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace fsuda {

/// Builds a scalar loss on the given tape from the current parameter values.
using ScalarFunction = std::function<Var<double>(Tape<double>&)>;

struct GradCheckOptions {
    double step = 1e-3;
    /// Multiplies the analytic gradient before comparison; 1 for a real check.
    double corrupt_factor = 1.0;
    /// A coordinate whose error exceeds this is re-measured at each of
    /// `retry_steps` and keeps the smallest error. A difference interval that
    /// straddles a ReLU, max-pool or top-k switch gives a spurious slope; a
    /// wrong gradient stays wrong at every step.
    double retry_above = INFINITY;
    std::vector<double> retry_steps;
};

struct GradCheckResult {
    double max_rel_error = 0;
    std::string worst_parameter;
    Index worst_index = -1;
    double analytic = 0;
    double numeric = 0;
    Index coordinates = 0;
    /// Coordinates that needed a retry step.
    Index retried = 0;
};

/// Compares reverse-mode gradients with central differences for every
/// parameter coordinate. Relative error per coordinate is
/// |g_ad - g_fd| / max(1, |g_ad|, |g_fd|). Throws on a non-finite loss.
/// Parameter values are restored before returning.
GradCheckResult gradient_check(const ScalarFunction& f, ParameterSet<double>& params,
                               const GradCheckOptions& options = {});
GradCheckResult gradient_check(const ScalarFunction& f, const std::vector<ParameterSet<double>*>& sets,
                               const GradCheckOptions& options = {});

}  // namespace fsuda

#endif  // FSUDA_GRADIENT_CHECK_HPP
