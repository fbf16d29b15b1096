#include "fsuda/adam.hpp"

#include <cmath>

namespace fsuda {

template <typename Scalar>
Adam<Scalar>::Adam(std::vector<ParameterSet<Scalar>*> sets, AdamConfig config) : config_(config) {
    for (auto* set : sets)
        for (auto& p : *set)
            slots_.push_back({&p, Vector<Scalar>::Zero(p.value.size()), Vector<Scalar>::Zero(p.value.size())});
}

template <typename Scalar>
void Adam<Scalar>::step(double lr) {
    ++steps_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    const auto b1 = static_cast<Scalar>(config_.beta1);
    const auto b2 = static_cast<Scalar>(config_.beta2);
    const auto step = static_cast<Scalar>(lr / c1);
    const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
    const auto eps = static_cast<Scalar>(config_.epsilon);
    for (auto& s : slots_) {
        const auto& g = s.param->grad.values();
        s.m = b1 * s.m + (Scalar(1) - b1) * g;
        s.v = b2 * s.v + (Scalar(1) - b2) * g.cwiseAbs2();
        s.param->value.values().array() -=
            step * s.m.array() / ((s.v.array() * inv_c2).sqrt() + eps);
    }
}

double step_decay_rate(double initial, long episode, long halve_every) {
    if (halve_every <= 0) return initial;
    return initial * std::ldexp(1.0, -static_cast<int>(episode / halve_every));
}

template class Adam<float>;
template class Adam<double>;

}  // namespace fsuda
