#include "fsuda/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace fsuda {

Index shape_size(const Shape& shape) {
    Index n = 1;
    for (Index e : shape) {
        if (e <= 0) throw std::invalid_argument("non-positive extent in shape " + shape_string(shape));
        n *= e;
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape) : shape_(std::move(shape)) {
    values_ = Vector<Scalar>::Zero(shape_size(shape_));
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Vector<Scalar> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_size(shape_) != values_.size())
        throw std::invalid_argument("tensor " + shape_string(shape_) + " given " +
                                    std::to_string(values_.size()) + " values");
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, std::initializer_list<Scalar> values) : shape_(std::move(shape)) {
    values_.resize(static_cast<Index>(values.size()));
    Index i = 0;
    for (Scalar v : values) values_[i++] = v;
    if (shape_size(shape_) != values_.size())
        throw std::invalid_argument("tensor " + shape_string(shape_) + " given " +
                                    std::to_string(values_.size()) + " values");
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::constant(Shape shape, Scalar v) {
    const Index n = shape_size(shape);
    return Tensor(std::move(shape), Vector<Scalar>::Constant(n, v));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::uninitialized(Shape shape) {
    const Index n = shape_size(shape);
    return Tensor(std::move(shape), Vector<Scalar>(n));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from_matrix(const Matrix<Scalar>& m) {
    Tensor t({m.rows(), m.cols()});
    t.matrix() = m;
    return t;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::identity(Index n) {
    Tensor t({n, n});
    t.matrix().setIdentity();
    return t;
}

template <typename Scalar>
Index Tensor<Scalar>::offset(std::initializer_list<Index> idx) const {
    if (static_cast<Index>(idx.size()) != rank())
        throw std::out_of_range("index rank does not match tensor " + shape_string(shape_));
    Index off = 0;
    std::size_t axis = 0;
    for (Index i : idx) {
        if (i < 0 || i >= shape_[axis]) throw std::out_of_range("index out of range for " + shape_string(shape_));
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

template <typename Scalar>
Scalar& Tensor<Scalar>::at(std::initializer_list<Index> idx) {
    return values_[offset(idx)];
}

template <typename Scalar>
Scalar Tensor<Scalar>::at(std::initializer_list<Index> idx) const {
    return values_[offset(idx)];
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
    if (size() != 1) throw std::logic_error("item() on tensor " + shape_string(shape_));
    return values_[0];
}

template <typename Scalar>
MatrixMap<Scalar> Tensor<Scalar>::matrix() {
    const Index rows = shape_.empty() ? 0 : shape_[0];
    return MatrixMap<Scalar>(values_.data(), rows, rows ? size() / rows : 0);
}

template <typename Scalar>
ConstMatrixMap<Scalar> Tensor<Scalar>::matrix() const {
    const Index rows = shape_.empty() ? 0 : shape_[0];
    return ConstMatrixMap<Scalar>(values_.data(), rows, rows ? size() / rows : 0);
}

template <typename Scalar>
MatrixMap<Scalar> Tensor<Scalar>::as_matrix(Index rows, Index cols) {
    if (rows * cols != size()) throw std::invalid_argument("as_matrix extent mismatch on " + shape_string(shape_));
    return MatrixMap<Scalar>(values_.data(), rows, cols);
}

template <typename Scalar>
ConstMatrixMap<Scalar> Tensor<Scalar>::as_matrix(Index rows, Index cols) const {
    if (rows * cols != size()) throw std::invalid_argument("as_matrix extent mismatch on " + shape_string(shape_));
    return ConstMatrixMap<Scalar>(values_.data(), rows, cols);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::reshaped(Shape shape) const {
    return Tensor(std::move(shape), values_);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace fsuda
