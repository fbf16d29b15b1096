#ifndef FSUDA_AUTODIFF_HPP
#define FSUDA_AUTODIFF_HPP

#include "fsuda/tensor.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>

namespace fsuda {

/// A trainable tensor and its gradient buffer (same shape as the value).
template <typename Scalar>
struct Parameter {
    std::string name;
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
};

/// Ordered, name-addressable registry of parameters. Element addresses are
/// stable for the lifetime of the set.
template <typename Scalar>
class ParameterSet {
public:
    Parameter<Scalar>& add(std::string name, Tensor<Scalar> init);

    Parameter<Scalar>& operator[](std::size_t i) { return params_[i]; }
    const Parameter<Scalar>& operator[](std::size_t i) const { return params_[i]; }
    Parameter<Scalar>* find(const std::string& name);
    const Parameter<Scalar>* find(const std::string& name) const;

    std::size_t size() const { return params_.size(); }
    Index scalar_count() const;
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void zero_grad();

private:
    std::deque<Parameter<Scalar>> params_;
};

template <typename Scalar>
class Tape;

/// Handle to a node recorded on a tape. Cheap to copy; valid until the tape is cleared.
template <typename Scalar>
class Var {
public:
    Var() = default;
    Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Tensor<Scalar>& value() const;
    const Shape& shape() const { return value().shape(); }
    Index extent(Index axis) const { return value().extent(axis); }
    Index size() const { return value().size(); }
    Scalar item() const { return value().item(); }

    Tape<Scalar>& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape<Scalar>* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode tape for one forward pass. Backward accumulates leaf
/// gradients into the bound Parameter::grad buffers. Confined to one thread.
template <typename Scalar>
class Tape {
public:
    /// Called with the node's output gradient; adds into parent buffers via grad_buffer().
    using Backward = std::function<void(const Tensor<Scalar>& out_grad, Tape& tape)>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<Scalar> constant(Tensor<Scalar> value);
    Var<Scalar> param(Parameter<Scalar>& p);
    Var<Scalar> record(Tensor<Scalar> value, std::span<const Var<Scalar>> parents, Backward backward);
    Var<Scalar> record(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> parents, Backward backward) {
        return record(std::move(value), std::span<const Var<Scalar>>(parents.begin(), parents.size()),
                      std::move(backward));
    }

    const Tensor<Scalar>& value(const Var<Scalar>& v) const { return nodes_[v.id()].value; }
    bool needs_grad(const Var<Scalar>& v) const { return nodes_[v.id()].needs_grad; }

    /// Gradient accumulator of `v`, allocated on first use; nullptr when `v`
    /// does not lead to any parameter.
    Vector<Scalar>* grad_buffer(const Var<Scalar>& v);

    /// Seeds d(loss)=1 and propagates to every parameter leaf.
    void backward(const Var<Scalar>& loss);

    /// Drops the recorded graph. Parameter gradients are untouched.
    void reset();

    bool grad_enabled() const { return grad_enabled_; }
    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<Scalar> value;
        Vector<Scalar> grad;
        bool needs_grad = false;
        Parameter<Scalar>* param = nullptr;
        Backward backward;
    };

    std::deque<Node> nodes_;
    std::unordered_map<const Parameter<Scalar>*, std::size_t> param_nodes_;
    bool grad_enabled_;
};

/// A parameter registry together with the tape that differentiates into it.
/// clear() drops the graph and zeroes every gradient buffer.
template <typename Scalar>
struct ParamTape {
    ParameterSet<Scalar>& params;
    Tape<Scalar>& tape;

    void clear() {
        tape.reset();
        params.zero_grad();
    }
};

template <typename Scalar>
const Tensor<Scalar>& Var<Scalar>::value() const {
    return tape_->value(*this);
}

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace fsuda

#endif  // FSUDA_AUTODIFF_HPP
