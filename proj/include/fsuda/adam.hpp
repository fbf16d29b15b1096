#ifndef FSUDA_ADAM_HPP
#define FSUDA_ADAM_HPP

#include "fsuda/autodiff.hpp"

#include <vector>

namespace fsuda {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam over one or more parameter sets.
template <typename Scalar>
class Adam {
public:
    explicit Adam(std::vector<ParameterSet<Scalar>*> sets, AdamConfig config = {});

    /// One update from the current gradient buffers.
    void step(double lr);
    long steps() const { return steps_; }

private:
    struct Slot {
        Parameter<Scalar>* param;
        Vector<Scalar> m, v;
    };
    std::vector<Slot> slots_;
    AdamConfig config_;
    long steps_ = 0;
};

/// Initial rate halved every `halve_every` episodes (0-based episode index).
double step_decay_rate(double initial, long episode, long halve_every);

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace fsuda

#endif  // FSUDA_ADAM_HPP
