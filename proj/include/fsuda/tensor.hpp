#ifndef FSUDA_TENSOR_HPP
#define FSUDA_TENSOR_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace fsuda {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using MatrixMap = Eigen::Map<Matrix<Scalar>>;

template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const Matrix<Scalar>>;

Index shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor. Rank 0 is not used; scalars have shape {1}.
template <typename Scalar>
class Tensor {
public:
    using value_type = Scalar;

    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, Vector<Scalar> values);
    Tensor(Shape shape, std::initializer_list<Scalar> values);

    static Tensor scalar(Scalar v) { return Tensor({1}, Vector<Scalar>::Constant(1, v)); }
    static Tensor constant(Shape shape, Scalar v);
    /// Contents unspecified; for outputs that are fully overwritten.
    static Tensor uninitialized(Shape shape);
    static Tensor from_matrix(const Matrix<Scalar>& m);
    static Tensor identity(Index n);

    const Shape& shape() const { return shape_; }
    Index rank() const { return static_cast<Index>(shape_.size()); }
    Index extent(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    Index size() const { return values_.size(); }
    bool empty() const { return values_.size() == 0; }

    Vector<Scalar>& values() { return values_; }
    const Vector<Scalar>& values() const { return values_; }
    Scalar* data() { return values_.data(); }
    const Scalar* data() const { return values_.data(); }

    Scalar& operator[](Index i) { return values_[i]; }
    Scalar operator[](Index i) const { return values_[i]; }
    Scalar& at(std::initializer_list<Index> idx);
    Scalar at(std::initializer_list<Index> idx) const;
    Scalar item() const;

    /// Leading extent as rows, the product of the rest as columns.
    MatrixMap<Scalar> matrix();
    ConstMatrixMap<Scalar> matrix() const;
    MatrixMap<Scalar> as_matrix(Index rows, Index cols);
    ConstMatrixMap<Scalar> as_matrix(Index rows, Index cols) const;
    Matrix<Scalar> to_matrix() const { return matrix(); }

    Tensor reshaped(Shape shape) const;
    bool all_finite() const { return values_.allFinite(); }

    template <typename Other>
    Tensor<Other> cast() const {
        return Tensor<Other>(shape_, values_.template cast<Other>());
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.values_ == b.values_;
    }

private:
    Index offset(std::initializer_list<Index> idx) const;

    Shape shape_;
    Vector<Scalar> values_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace fsuda

#endif  // FSUDA_TENSOR_HPP
