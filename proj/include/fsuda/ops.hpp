#ifndef FSUDA_OPS_HPP
#define FSUDA_OPS_HPP

#include "fsuda/autodiff.hpp"

#include <type_traits>
#include <vector>

namespace fsuda {

template <typename T>
using Scalar_t = std::type_identity_t<T>;

// Linear algebra. All 2-D ops view a tensor as extent(0) x (size / extent(0)).
template <typename S> Var<S> matmul(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> transpose(const Var<S>& m);

// Elementwise arithmetic on equal shapes.
template <typename S> Var<S> add(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> sub(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> mul(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> scale(const Var<S>& x, Scalar_t<S> factor);
template <typename S> Var<S> add_scalar(const Var<S>& x, Scalar_t<S> c);
/// x times a scalar-valued variable.
template <typename S> Var<S> scale_by(const Var<S>& x, const Var<S>& s);

/// Bias / gain along the last axis: v has as many entries as x's last extent.
template <typename S> Var<S> add_channelwise(const Var<S>& x, const Var<S>& v);
template <typename S> Var<S> mul_channelwise(const Var<S>& x, const Var<S>& v);

template <typename S> Var<S> relu(const Var<S>& x);
template <typename S> Var<S> sigmoid(const Var<S>& x);
template <typename S> Var<S> log(const Var<S>& x);
template <typename S> Var<S> exp(const Var<S>& x);
/// Gradient passes only where lo <= x <= hi.
template <typename S> Var<S> clamp(const Var<S>& x, Scalar_t<S> lo, Scalar_t<S> hi);

// Reductions.
template <typename S> Var<S> sum(const Var<S>& x);
template <typename S> Var<S> mean(const Var<S>& x);
template <typename S> Var<S> row_sum(const Var<S>& m);
template <typename S> Var<S> col_mean(const Var<S>& m);
/// Sums consecutive groups of `group` rows: [r x c] -> [r/group x c].
template <typename S> Var<S> sum_row_groups(const Var<S>& m, Index group);
template <typename S> Var<S> trace(const Var<S>& m);
template <typename S> Var<S> frobenius_squared(const Var<S>& m);

// Layout.
template <typename S> Var<S> reshape(const Var<S>& x, Shape shape);
/// Rows [begin, begin + count) along axis 0.
template <typename S> Var<S> slice(const Var<S>& x, Index begin, Index count);
template <typename S> Var<S> slice_cols(const Var<S>& m, Index begin, Index count);
template <typename S> Var<S> concat(const std::vector<Var<S>>& parts);
/// out(i, j) = m(i, indices(i, j)).
template <typename S> Var<S> gather_cols(const Var<S>& m, const Matrix<Index>& indices);
/// Multiplies by a constant 0/1 gate; no gradient reaches gated-off entries.
template <typename S> Var<S> mask(const Var<S>& x, const Tensor<S>& gate);

/// Cross-correlation of x [H,W,Cin] or [B,H,W,Cin] with w [kh,kw,Cin,Cout], zero padding.
template <typename S> Var<S> conv2d(const Var<S>& x, const Var<S>& w, Index stride, Index padding);

enum class PoolMode { kMax, kAvg };

struct PoolGeometry {
    Index window = 2;
    Index stride = 2;
    bool ceil_mode = false;
};

/// Output extent of one pooled axis.
Index pooled_extent(Index in, const PoolGeometry& g);

/// Pooling over the two spatial axes of [H,W,D] or [B,H,W,D]. Ragged windows
/// (ceil mode) are clipped; average divides by the in-window count.
template <typename S> Var<S> pool2d(const Var<S>& x, PoolMode mode, const PoolGeometry& g);
/// Averages over an even partition of the plane into out_h x out_w cells.
template <typename S> Var<S> adaptive_avg_pool2d(const Var<S>& x, Index out_h, Index out_w);

/// Each row divided by max(||row||, eps).
template <typename S> Var<S> l2_normalize_rows(const Var<S>& m, Scalar_t<S> eps = Scalar_t<S>(1e-12));
template <typename S> Var<S> log_softmax_rows(const Var<S>& m);
template <typename S> Var<S> logsumexp_rows(const Var<S>& m);

/// Identity forward; multiplies the incoming gradient by `factor`.
template <typename S> Var<S> scale_gradient(const Var<S>& x, Scalar_t<S> factor);

/// Half-open start/end of cell `i` when `extent` is split into `cells` parts.
inline Index partition_begin(Index i, Index extent, Index cells) { return i * extent / cells; }
inline Index partition_end(Index i, Index extent, Index cells) { return (i + 1) * extent / cells; }

template <typename S> Var<S> operator+(const Var<S>& a, const Var<S>& b) { return add(a, b); }
template <typename S> Var<S> operator-(const Var<S>& a, const Var<S>& b) { return sub(a, b); }
template <typename S> Var<S> operator-(const Var<S>& a) { return scale(a, S(-1)); }
template <typename S> Var<S> operator*(const Var<S>& a, Scalar_t<S> c) { return scale(a, c); }
template <typename S> Var<S> operator*(Scalar_t<S> c, const Var<S>& a) { return scale(a, c); }

}  // namespace fsuda

#endif  // FSUDA_OPS_HPP
