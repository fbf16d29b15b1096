#include "fsuda/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fsuda {

namespace {

double evaluate(const ScalarFunction& f) {
    Tape<double> tape(false);
    const double v = f(tape).item();
    if (!std::isfinite(v)) throw std::domain_error("gradient_check: loss is not finite");
    return v;
}

}  // namespace

GradCheckResult gradient_check(const ScalarFunction& f, ParameterSet<double>& params,
                               const GradCheckOptions& options) {
    return gradient_check(f, std::vector<ParameterSet<double>*>{&params}, options);
}

GradCheckResult gradient_check(const ScalarFunction& f, const std::vector<ParameterSet<double>*>& sets,
                               const GradCheckOptions& options) {
    for (auto* s : sets) s->zero_grad();
    {
        Tape<double> tape;
        const Var<double> loss = f(tape);
        if (!std::isfinite(loss.item())) throw std::domain_error("gradient_check: loss is not finite");
        tape.backward(loss);
    }

    GradCheckResult result;
    for (auto* set : sets) {
        for (auto& p : *set) {
            for (Index i = 0; i < p.value.size(); ++i) {
                const double analytic = p.grad[i] * options.corrupt_factor;
                auto measure = [&](double h) {
                    const double saved = p.value[i];
                    p.value[i] = saved + h;
                    const double up = evaluate(f);
                    p.value[i] = saved - h;
                    const double down = evaluate(f);
                    p.value[i] = saved;
                    return (up - down) / (2 * h);
                };
                auto rel_error = [&](double numeric) {
                    return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
                };
                double numeric = measure(options.step);
                double err = rel_error(numeric);
                if (err > options.retry_above && !options.retry_steps.empty()) {
                    ++result.retried;
                    for (double h : options.retry_steps) {
                        const double n = measure(h);
                        if (rel_error(n) < err) {
                            err = rel_error(n);
                            numeric = n;
                        }
                    }
                }
                ++result.coordinates;
                if (err > result.max_rel_error || result.worst_index < 0) {
                    result.max_rel_error = err;
                    result.worst_parameter = p.name;
                    result.worst_index = i;
                    result.analytic = analytic;
                    result.numeric = numeric;
                }
            }
        }
    }
    return result;
}

}  // namespace fsuda
