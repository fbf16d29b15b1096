#include "fsuda/autodiff.hpp"

#include <stdexcept>

namespace fsuda {

template <typename Scalar>
Parameter<Scalar>& ParameterSet<Scalar>::add(std::string name, Tensor<Scalar> init) {
    if (find(name)) throw std::invalid_argument("duplicate parameter name " + name);
    Tensor<Scalar> grad(init.shape());
    params_.push_back({std::move(name), std::move(init), std::move(grad)});
    return params_.back();
}

template <typename Scalar>
Parameter<Scalar>* ParameterSet<Scalar>::find(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

template <typename Scalar>
const Parameter<Scalar>* ParameterSet<Scalar>::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

template <typename Scalar>
Index ParameterSet<Scalar>::scalar_count() const {
    Index n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

template <typename Scalar>
void ParameterSet<Scalar>::zero_grad() {
    for (auto& p : params_) p.grad.values().setZero();
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::constant(Tensor<Scalar> value) {
    nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
    return Var<Scalar>(this, nodes_.size() - 1);
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::param(Parameter<Scalar>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var<Scalar>(this, it->second);
    nodes_.push_back(Node{p.value, {}, grad_enabled_, &p, {}});
    param_nodes_.emplace(&p, nodes_.size() - 1);
    return Var<Scalar>(this, nodes_.size() - 1);
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::record(Tensor<Scalar> value, std::span<const Var<Scalar>> parents,
                                 Backward backward) {
    bool needs = false;
    if (grad_enabled_) {
        for (const auto& p : parents) {
            if (&p.tape() != this) throw std::logic_error("operation mixes variables from different tapes");
            needs = needs || nodes_[p.id()].needs_grad;
        }
    }
    nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(backward) : Backward{}});
    return Var<Scalar>(this, nodes_.size() - 1);
}

template <typename Scalar>
Vector<Scalar>* Tape<Scalar>::grad_buffer(const Var<Scalar>& v) {
    Node& n = nodes_[v.id()];
    if (!n.needs_grad) return nullptr;
    if (n.grad.size() == 0) n.grad = Vector<Scalar>::Zero(n.value.size());
    return &n.grad;
}

template <typename Scalar>
void Tape<Scalar>::backward(const Var<Scalar>& loss) {
    if (loss.size() != 1) throw std::invalid_argument("backward needs a scalar loss, got " + shape_string(loss.shape()));
    Vector<Scalar>* seed = grad_buffer(loss);
    if (!seed) return;
    (*seed)[0] += Scalar(1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.grad.size() == 0) continue;
        if (n.param) {
            n.param->grad.values() += n.grad;
        } else if (n.backward) {
            const Tensor<Scalar> g(n.value.shape(), std::move(n.grad));
            n.backward(g, *this);
        }
        n.grad = Vector<Scalar>();
    }
}

template <typename Scalar>
void Tape<Scalar>::reset() {
    nodes_.clear();
    param_nodes_.clear();
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace fsuda
