#include "fsuda/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fsuda {

namespace {

template <typename S>
void require_same_shape(const char* op, const Var<S>& a, const Var<S>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                    shape_string(b.shape()));
}

template <typename S>
void require_rank(const char* op, const Var<S>& x, Index rank) {
    if (x.value().rank() != rank)
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                    shape_string(x.shape()));
}

template <typename S>
Index rows_of(const Tensor<S>& t) {
    return t.extent(0);
}

template <typename S>
Index cols_of(const Tensor<S>& t) {
    return t.size() / t.extent(0);
}

// Spatial layout of [H,W,C] or [B,H,W,C].
struct Planes {
    Index batch, height, width, channels;
};

template <typename S>
Planes planes_of(const char* op, const Tensor<S>& t) {
    if (t.rank() == 3) return {1, t.extent(0), t.extent(1), t.extent(2)};
    if (t.rank() == 4) return {t.extent(0), t.extent(1), t.extent(2), t.extent(3)};
    throw std::invalid_argument(std::string(op) + ": expected [H,W,C] or [B,H,W,C], got " + shape_string(t.shape()));
}

Shape planes_shape(const Planes& p, bool batched) {
    if (batched) return {p.batch, p.height, p.width, p.channels};
    return {p.height, p.width, p.channels};
}

// Elementwise map with derivative expressed from input x and output y.
template <typename S, typename F, typename D>
Var<S> unary(const Var<S>& x, F f, D df) {
    const Tensor<S>& xv = x.value();
    Tensor<S> out(xv.shape(), xv.values().unaryExpr(f));
    return x.tape().record(std::move(out), {x}, [x, df](const Tensor<S>& g, Tape<S>& t) {
        if (auto* gx = t.grad_buffer(x)) {
            const auto& xv = t.value(x).values();
            const Index n = xv.size();
            for (Index i = 0; i < n; ++i) (*gx)[i] += g[i] * df(xv[i]);
        }
    });
}

}  // namespace

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    if (a.extent(1) != b.extent(0))
        throw std::invalid_argument("matmul: inner extents differ, " + shape_string(a.shape()) + " x " +
                                    shape_string(b.shape()));
    auto out = Tensor<S>::uninitialized({a.extent(0), b.extent(1)});
    out.matrix().noalias() = a.value().matrix() * b.value().matrix();
    return a.tape().record(std::move(out), {a, b}, [a, b](const Tensor<S>& g, Tape<S>& t) {
        const auto gm = g.matrix();
        if (auto* ga = t.grad_buffer(a)) {
            MatrixMap<S>(ga->data(), a.extent(0), a.extent(1)).noalias() += gm * t.value(b).matrix().transpose();
        }
        if (auto* gb = t.grad_buffer(b)) {
            MatrixMap<S>(gb->data(), b.extent(0), b.extent(1)).noalias() += t.value(a).matrix().transpose() * gm;
        }
    });
}

template <typename S>
Var<S> transpose(const Var<S>& m) {
    require_rank("transpose", m, 2);
    Tensor<S> out({m.extent(1), m.extent(0)});
    out.matrix() = m.value().matrix().transpose();
    return m.tape().record(std::move(out), {m}, [m](const Tensor<S>& g, Tape<S>& t) {
        if (auto* gm = t.grad_buffer(m)) MatrixMap<S>(gm->data(), m.extent(0), m.extent(1)) += g.matrix().transpose();
    });
}

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
    require_same_shape("add", a, b);
    Tensor<S> out(a.shape(), a.value().values() + b.value().values());
    return a.tape().record(std::move(out), {a, b}, [a, b](const Tensor<S>& g, Tape<S>& t) {
        if (auto* ga = t.grad_buffer(a)) *ga += g.values();
        if (auto* gb = t.grad_buffer(b)) *gb += g.values();
    });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
    require_same_shape("sub", a, b);
    Tensor<S> out(a.shape(), a.value().values() - b.value().values());
    return a.tape().record(std::move(out), {a, b}, [a, b](const Tensor<S>& g, Tape<S>& t) {
        if (auto* ga = t.grad_buffer(a)) *ga += g.values();
        if (auto* gb = t.grad_buffer(b)) *gb -= g.values();
    });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
    require_same_shape("mul", a, b);
    Tensor<S> out(a.shape(), a.value().values().cwiseProduct(b.value().values()));
    return a.tape().record(std::move(out), {a, b}, [a, b](const Tensor<S>& g, Tape<S>& t) {
        if (auto* ga = t.grad_buffer(a)) *ga += g.values().cwiseProduct(t.value(b).values());
        if (auto* gb = t.grad_buffer(b)) *gb += g.values().cwiseProduct(t.value(a).values());
    });
}

template <typename S>
Var<S> scale(const Var<S>& x, Scalar_t<S> factor) {
    Tensor<S> out(x.shape(), x.value().values() * factor);
    return x.tape().record(std::move(out), {x}, [x, factor](const Tensor<S>& g, Tape<S>& t) {
        if (auto* gx = t.grad_buffer(x)) *gx += g.values() * factor;
    });
}

template <typename S>
Var<S> add_scalar(const Var<S>& x, Scalar_t<S> c) {
    Tensor<S> out(x.shape(), x.value().values().array() + c);
    return x.tape().record(std::move(out), {x}, [x](const Tensor<S>& g, Tape<S>& t) {
        if (auto* gx = t.grad_buffer(x)) *gx += g.values();
    });
}

template <typename S>
Var<S> scale_by(const Var<S>& x, const Var<S>& s) {
    if (s.size() != 1) throw std::invalid_argument("scale_by: factor must be scalar, got " + shape_string(s.shape()));
    const S factor = s.item();
    Tensor<S> out(x.shape(), x.value().values() * factor);
    return x.tape().record(std::move(out), {x, s}, [x, s](const Tensor<S>& g, Tape<S>& t) {
        if (auto* gx = t.grad_buffer(x)) *gx += g.values() * t.value(s).item();
        if (auto* gs = t.grad_buffer(s)) (*gs)[0] += g.values().dot(t.value(x).values());
    });
}

template <typename S>
Var<S> add_channelwise(const Var<S>& x, const Var<S>& v) {
    const Index c = v.size();
    if (x.shape().back() != c)
        throw std::invalid_argument("add_channelwise: " + shape_string(x.shape()) + " with " + shape_string(v.shape()));
    const Index rows = x.size() / c;
    auto out = Tensor<S>::uninitialized(x.shape());
    out.as_matrix(rows, c) = x.value().as_matrix(rows, c).rowwise() + v.value().values().transpose();
    return x.tape().record(std::move(out), {x, v}, [x, v, rows, c](const Tensor<S>& g, Tape<S>& t) {
        if (auto* gx = t.grad_buffer(x)) *gx += g.values();
        if (auto* gv = t.grad_buffer(v)) *gv += g.as_matrix(rows, c).colwise().sum().transpose();
    });
}

template <typename S>
Var<S> mul_channelwise(const Var<S>& x, const Var<S>& v) {
    const Index c = v.size();
    if (x.shape().back() != c)
        throw std::invalid_argument("mul_channelwise: " + shape_string(x.shape()) + " with " + shape_string(v.shape()));
    const Index rows = x.size() / c;
    auto out = Tensor<S>::uninitialized(x.shape());
    out.as_matrix(rows, c) = x.value().as_matrix(rows, c) * v.value().values().asDiagonal();
    return x.tape().record(std::move(out), {x, v}, [x, v, rows, c](const Tensor<S>& g, Tape<S>& t) {
        const auto gm = g.as_matrix(rows, c);
        if (auto* gx = t.grad_buffer(x))
            MatrixMap<S>(gx->data(), rows, c) += gm * t.value(v).values().asDiagonal();
        if (auto* gv = t.grad_buffer(v))
            *gv += gm.cwiseProduct(t.value(x).as_matrix(rows, c)).colwise().sum().transpose();
    });
}

template <typename S>
Var<S> relu(const Var<S>& x) {
    return unary(
        x, [](S v) { return v > S(0) ? v : S(0); }, [](S v) { return v > S(0) ? S(1) : S(0); });
}

template <typename S>
Var<S> sigmoid(const Var<S>& x) {
    auto f = [](S v) {
        if (v >= S(0)) return S(1) / (S(1) + std::exp(-v));
        const S e = std::exp(v);
        return e / (S(1) + e);
    };
    return unary(x, f, [f](S v) {
        const S s = f(v);
        return s * (S(1) - s);
    });
}

template <typename S>
Var<S> log(const Var<S>& x) {
    if ((x.value().values().array() <= S(0)).any()) throw std::domain_error("log of non-positive value");
    return unary(
        x, [](S v) { return std::log(v); }, [](S v) { return S(1) / v; });
}

template <typename S>
Var<S> exp(const Var<S>& x) {
    return unary(
        x, [](S v) { return std::exp(v); }, [](S v) { return std::exp(v); });
}

template <typename S>
Var<S> clamp(const Var<S>& x, Scalar_t<S> lo, Scalar_t<S> hi) {
    return unary(
        x, [lo, hi](S v) { return std::clamp(v, lo, hi); },
        [lo, hi](S v) { return (v >= lo && v <= hi) ? S(1) : S(0); });
}

template <typename S>
Var<S> sum(const Var<S>& x) {
    return x.tape().record(Tensor<S>::scalar(x.value().values().sum()), {x}, [x](const Tensor<S>& g, Tape<S>& t) {
        if (auto* gx = t.grad_buffer(x)) gx->array() += g[0];
    });
}

template <typename S>
Var<S> mean(const Var<S>& x) {
    const S inv = S(1) / static_cast<S>(x.size());
    return x.tape().record(Tensor<S>::scalar(x.value().values().sum() * inv), {x},
                           [x, inv](const Tensor<S>& g, Tape<S>& t) {
                               if (auto* gx = t.grad_buffer(x)) gx->array() += g[0] * inv;
                           });
}

template <typename S>
Var<S> row_sum(const Var<S>& m) {
    const Index rows = rows_of(m.value()), cols = cols_of(m.value());
    Tensor<S> out({rows}, m.value().matrix().rowwise().sum());
    return m.tape().record(std::move(out), {m}, [m, rows, cols](const Tensor<S>& g, Tape<S>& t) {
        if (auto* gm = t.grad_buffer(m)) MatrixMap<S>(gm->data(), rows, cols).colwise() += g.values();
    });
}

template <typename S>
Var<S> col_mean(const Var<S>& m) {
    const Index rows = rows_of(m.value()), cols = cols_of(m.value());
    Tensor<S> out({cols}, m.value().matrix().colwise().mean().transpose());
    return m.tape().record(std::move(out), {m}, [m, rows, cols](const Tensor<S>& g, Tape<S>& t) {
        if (auto* gm = t.grad_buffer(m))
            MatrixMap<S>(gm->data(), rows, cols).rowwise() += g.values().transpose() / static_cast<S>(rows);
    });
}

template <typename S>
Var<S> sum_row_groups(const Var<S>& m, Index group) {
    const Index rows = rows_of(m.value()), cols = cols_of(m.value());
    if (group < 1 || rows % group != 0)
        throw std::invalid_argument("sum_row_groups: " + std::to_string(rows) + " rows in groups of " +
                                    std::to_string(group));
    const Index out_rows = rows / group;
    Tensor<S> out({out_rows, cols});
    const auto mv = m.value().matrix();
    for (Index i = 0; i < out_rows; ++i) out.matrix().row(i) = mv.middleRows(i * group, group).colwise().sum();
    return m.tape().record(std::move(out), {m}, [m, rows, cols, group, out_rows](const Tensor<S>& g, Tape<S>& t) {
        if (auto* gm = t.grad_buffer(m)) {
            MatrixMap<S> gmm(gm->data(), rows, cols);
            const auto gg = g.matrix();
            for (Index i = 0; i < out_rows; ++i) gmm.middleRows(i * group, group).rowwise() += gg.row(i);
        }
    });
}

template <typename S>
Var<S> trace(const Var<S>& m) {
    require_rank("trace", m, 2);
    if (m.extent(0) != m.extent(1)) throw std::invalid_argument("trace of non-square " + shape_string(m.shape()));
    const Index n = m.extent(0);
    return m.tape().record(Tensor<S>::scalar(m.value().matrix().trace()), {m}, [m, n](const Tensor<S>& g, Tape<S>& t) {
        if (auto* gm = t.grad_buffer(m))
            for (Index i = 0; i < n; ++i) (*gm)[i * n + i] += g[0];
    });
}

template <typename S>
Var<S> frobenius_squared(const Var<S>& m) {
    return m.tape().record(Tensor<S>::scalar(m.value().values().squaredNorm()), {m},
                           [m](const Tensor<S>& g, Tape<S>& t) {
                               if (auto* gm = t.grad_buffer(m)) *gm += (S(2) * g[0]) * t.value(m).values();
                           });
}

template <typename S>
Var<S> reshape(const Var<S>& x, Shape shape) {
    if (shape_size(shape) != x.size())
        throw std::invalid_argument("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
    return x.tape().record(x.value().reshaped(std::move(shape)), {x}, [x](const Tensor<S>& g, Tape<S>& t) {
        if (auto* gx = t.grad_buffer(x)) *gx += g.values();
    });
}

template <typename S>
Var<S> slice(const Var<S>& x, Index begin, Index count) {
    if (begin < 0 || count <= 0 || begin + count > x.extent(0))
        throw std::out_of_range("slice [" + std::to_string(begin) + ", +" + std::to_string(count) + ") of " +
                                shape_string(x.shape()));
    const Index stride = x.size() / x.extent(0);
    Shape shape = x.shape();
    shape[0] = count;
    Tensor<S> out(shape, x.value().values().segment(begin * stride, count * stride));
    return x.tape().record(std::move(out), {x}, [x, begin, count, stride](const Tensor<S>& g, Tape<S>& t) {
        if (auto* gx = t.grad_buffer(x)) gx->segment(begin * stride, count * stride) += g.values();
    });
}

template <typename S>
Var<S> slice_cols(const Var<S>& m, Index begin, Index count) {
    const Index rows = rows_of(m.value()), cols = cols_of(m.value());
    if (begin < 0 || count <= 0 || begin + count > cols)
        throw std::out_of_range("slice_cols [" + std::to_string(begin) + ", +" + std::to_string(count) + ") of " +
                                shape_string(m.shape()));
    Tensor<S> out({rows, count});
    out.matrix() = m.value().matrix().middleCols(begin, count);
    return m.tape().record(std::move(out), {m}, [m, rows, cols, begin, count](const Tensor<S>& g, Tape<S>& t) {
        if (auto* gm = t.grad_buffer(m)) MatrixMap<S>(gm->data(), rows, cols).middleCols(begin, count) += g.matrix();
    });
}

template <typename S>
Var<S> concat(const std::vector<Var<S>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat of nothing");
    Shape shape = parts.front().shape();
    Index total = 0;
    for (const auto& p : parts) {
        Shape tail = p.shape();
        if (tail.size() != shape.size() || !std::equal(tail.begin() + 1, tail.end(), shape.begin() + 1))
            throw std::invalid_argument("concat: incompatible " + shape_string(p.shape()) + " and " +
                                        shape_string(shape));
        total += p.extent(0);
    }
    shape[0] = total;
    Tensor<S> out(shape);
    Index off = 0;
    for (const auto& p : parts) {
        out.values().segment(off, p.size()) = p.value().values();
        off += p.size();
    }
    return parts.front().tape().record(std::move(out), std::span<const Var<S>>(parts),
                                       [parts](const Tensor<S>& g, Tape<S>& t) {
                                           Index o = 0;
                                           for (const auto& p : parts) {
                                               if (auto* gp = t.grad_buffer(p)) *gp += g.values().segment(o, p.size());
                                               o += p.size();
                                           }
                                       });
}

template <typename S>
Var<S> gather_cols(const Var<S>& m, const Matrix<Index>& indices) {
    const Index rows = rows_of(m.value()), cols = cols_of(m.value());
    if (indices.rows() != rows)
        throw std::invalid_argument("gather_cols: " + std::to_string(indices.rows()) + " index rows for " +
                                    shape_string(m.shape()));
    if (indices.size() && (indices.minCoeff() < 0 || indices.maxCoeff() >= cols))
        throw std::out_of_range("gather_cols: column index out of range for " + shape_string(m.shape()));
    const Index n = indices.cols();
    Tensor<S> out({rows, n});
    const auto mv = m.value().matrix();
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < n; ++j) out.matrix()(i, j) = mv(i, indices(i, j));
    return m.tape().record(std::move(out), {m}, [m, indices, rows, cols, n](const Tensor<S>& g, Tape<S>& t) {
        if (auto* gm = t.grad_buffer(m)) {
            MatrixMap<S> gmm(gm->data(), rows, cols);
            const auto gg = g.matrix();
            for (Index i = 0; i < rows; ++i)
                for (Index j = 0; j < n; ++j) gmm(i, indices(i, j)) += gg(i, j);
        }
    });
}

template <typename S>
Var<S> mask(const Var<S>& x, const Tensor<S>& gate) {
    if (gate.size() != x.size())
        throw std::invalid_argument("mask: gate " + shape_string(gate.shape()) + " for " + shape_string(x.shape()));
    Tensor<S> out(x.shape(), x.value().values().cwiseProduct(gate.values()));
    return x.tape().record(std::move(out), {x}, [x, gate](const Tensor<S>& g, Tape<S>& t) {
        if (auto* gx = t.grad_buffer(x)) *gx += g.values().cwiseProduct(gate.values());
    });
}

template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, Index stride, Index padding) {
    if (stride <= 0) throw std::invalid_argument("conv2d: stride must be positive");
    if (padding < 0) throw std::invalid_argument("conv2d: negative padding");
    const Planes in = planes_of("conv2d", x.value());
    require_rank("conv2d", w, 4);
    const Index kh = w.extent(0), kw = w.extent(1), cin = w.extent(2), cout = w.extent(3);
    if (cin != in.channels)
        throw std::invalid_argument("conv2d: kernel " + shape_string(w.shape()) + " for input " +
                                    shape_string(x.shape()));
    if (kh > in.height + 2 * padding || kw > in.width + 2 * padding)
        throw std::invalid_argument("conv2d: kernel " + shape_string(w.shape()) + " exceeds padded input " +
                                    shape_string(x.shape()));
    const Index oh = (in.height + 2 * padding - kh) / stride + 1;
    const Index ow = (in.width + 2 * padding - kw) / stride + 1;
    const Index patch = kh * kw * cin;
    const Index positions = in.batch * oh * ow;

    // Without padding every patch entry is written below.
    Matrix<S> cols(positions, patch);
    if (padding > 0) cols.setZero();
    const S* xd = x.value().data();
    for (Index b = 0; b < in.batch; ++b)
        for (Index oy = 0; oy < oh; ++oy)
            for (Index ox = 0; ox < ow; ++ox) {
                S* row = cols.data() + ((b * oh + oy) * ow + ox) * patch;
                for (Index ky = 0; ky < kh; ++ky) {
                    const Index iy = oy * stride + ky - padding;
                    if (iy < 0 || iy >= in.height) continue;
                    for (Index kx = 0; kx < kw; ++kx) {
                        const Index ix = ox * stride + kx - padding;
                        if (ix < 0 || ix >= in.width) continue;
                        const S* src = xd + ((b * in.height + iy) * in.width + ix) * cin;
                        std::copy(src, src + cin, row + (ky * kw + kx) * cin);
                    }
                }
            }

    Planes outp{in.batch, oh, ow, cout};
    auto out = Tensor<S>::uninitialized(planes_shape(outp, x.value().rank() == 4));
    out.as_matrix(positions, cout).noalias() = cols * w.value().as_matrix(patch, cout);

    return x.tape().record(
        std::move(out), {x, w},
        [x, w, in, oh, ow, kh, kw, cin, cout, stride, padding, patch, positions,
         cols = std::move(cols)](const Tensor<S>& g, Tape<S>& t) {
            const auto gm = g.as_matrix(positions, cout);
            if (auto* gw = t.grad_buffer(w)) MatrixMap<S>(gw->data(), patch, cout).noalias() += cols.transpose() * gm;
            if (auto* gx = t.grad_buffer(x)) {
                const Matrix<S> dcols = gm * t.value(w).as_matrix(patch, cout).transpose();
                S* gxd = gx->data();
                for (Index b = 0; b < in.batch; ++b)
                    for (Index oy = 0; oy < oh; ++oy)
                        for (Index ox = 0; ox < ow; ++ox) {
                            const S* row = dcols.data() + ((b * oh + oy) * ow + ox) * patch;
                            for (Index ky = 0; ky < kh; ++ky) {
                                const Index iy = oy * stride + ky - padding;
                                if (iy < 0 || iy >= in.height) continue;
                                for (Index kx = 0; kx < kw; ++kx) {
                                    const Index ix = ox * stride + kx - padding;
                                    if (ix < 0 || ix >= in.width) continue;
                                    S* dst = gxd + ((b * in.height + iy) * in.width + ix) * cin;
                                    const S* src = row + (ky * kw + kx) * cin;
                                    for (Index c = 0; c < cin; ++c) dst[c] += src[c];
                                }
                            }
                        }
            }
        });
}

Index pooled_extent(Index in, const PoolGeometry& g) {
    if (g.window < 1) throw std::invalid_argument("pool2d: window must be at least 1");
    if (g.stride < 1) throw std::invalid_argument("pool2d: stride must be at least 1");
    if (!g.ceil_mode) {
        if (in < g.window) throw std::invalid_argument("pool2d: window larger than input without ceil mode");
        return (in - g.window) / g.stride + 1;
    }
    const Index span = std::max<Index>(in - g.window, 0);
    Index out = (span + g.stride - 1) / g.stride + 1;
    // The last window must start inside the input.
    if ((out - 1) * g.stride >= in) --out;
    return out;
}

template <typename S>
Var<S> pool2d(const Var<S>& x, PoolMode mode, const PoolGeometry& geo) {
    const Planes in = planes_of("pool2d", x.value());
    const Index oh = pooled_extent(in.height, geo), ow = pooled_extent(in.width, geo);
    const Index d = in.channels;
    Planes outp{in.batch, oh, ow, d};
    auto out = Tensor<S>::uninitialized(planes_shape(outp, x.value().rank() == 4));
    const S* xd = x.value().data();
    S* od = out.data();
    // For max pooling, the flat input offset chosen per output element.
    std::vector<Index> argmax(mode == PoolMode::kMax ? static_cast<std::size_t>(out.size()) : 0);

    for (Index b = 0; b < in.batch; ++b)
        for (Index oy = 0; oy < oh; ++oy) {
            const Index y0 = oy * geo.stride, y1 = std::min(y0 + geo.window, in.height);
            for (Index ox = 0; ox < ow; ++ox) {
                const Index x0 = ox * geo.stride, x1 = std::min(x0 + geo.window, in.width);
                const Index obase = ((b * oh + oy) * ow + ox) * d;
                const Index first = ((b * in.height + y0) * in.width + x0) * d;
                if (mode == PoolMode::kMax) {
                    // Window scanned in raster order; strict comparison keeps the earliest maximum.
                    Index* arg = argmax.data() + obase;
                    for (Index c = 0; c < d; ++c) arg[c] = first + c;
                    for (Index y = y0; y < y1; ++y)
                        for (Index xx = x0; xx < x1; ++xx) {
                            const Index base = ((b * in.height + y) * in.width + xx) * d;
                            for (Index c = 0; c < d; ++c)
                                if (xd[base + c] > xd[arg[c]]) arg[c] = base + c;
                        }
                    for (Index c = 0; c < d; ++c) od[obase + c] = xd[arg[c]];
                } else {
                    for (Index c = 0; c < d; ++c) od[obase + c] = 0;
                    for (Index y = y0; y < y1; ++y)
                        for (Index xx = x0; xx < x1; ++xx) {
                            const Index base = ((b * in.height + y) * in.width + xx) * d;
                            for (Index c = 0; c < d; ++c) od[obase + c] += xd[base + c];
                        }
                    const S area = static_cast<S>((y1 - y0) * (x1 - x0));
                    for (Index c = 0; c < d; ++c) od[obase + c] /= area;
                }
            }
        }

    return x.tape().record(
        std::move(out), {x},
        [x, mode, geo, in, oh, ow, d, argmax = std::move(argmax)](const Tensor<S>& g, Tape<S>& t) {
            auto* gx = t.grad_buffer(x);
            if (!gx) return;
            if (mode == PoolMode::kMax) {
                for (std::size_t i = 0; i < argmax.size(); ++i) (*gx)[argmax[i]] += g[static_cast<Index>(i)];
                return;
            }
            for (Index b = 0; b < in.batch; ++b)
                for (Index oy = 0; oy < oh; ++oy) {
                    const Index y0 = oy * geo.stride, y1 = std::min(y0 + geo.window, in.height);
                    for (Index ox = 0; ox < ow; ++ox) {
                        const Index x0 = ox * geo.stride, x1 = std::min(x0 + geo.window, in.width);
                        const S inv = S(1) / static_cast<S>((y1 - y0) * (x1 - x0));
                        for (Index c = 0; c < d; ++c) {
                            const S share = g[((b * oh + oy) * ow + ox) * d + c] * inv;
                            for (Index y = y0; y < y1; ++y)
                                for (Index xx = x0; xx < x1; ++xx) (*gx)[((b * in.height + y) * in.width + xx) * d + c] += share;
                        }
                    }
                }
        });
}

template <typename S>
Var<S> adaptive_avg_pool2d(const Var<S>& x, Index out_h, Index out_w) {
    const Planes in = planes_of("adaptive_avg_pool2d", x.value());
    if (out_h < 1 || out_w < 1 || out_h > in.height || out_w > in.width)
        throw std::invalid_argument("adaptive_avg_pool2d: cannot partition " + shape_string(x.shape()) + " into " +
                                    std::to_string(out_h) + "x" + std::to_string(out_w));
    const Index d = in.channels;
    Planes outp{in.batch, out_h, out_w, d};
    Tensor<S> out(planes_shape(outp, x.value().rank() == 4));
    const S* xd = x.value().data();
    for (Index b = 0; b < in.batch; ++b)
        for (Index oy = 0; oy < out_h; ++oy) {
            const Index y0 = partition_begin(oy, in.height, out_h), y1 = partition_end(oy, in.height, out_h);
            for (Index ox = 0; ox < out_w; ++ox) {
                const Index x0 = partition_begin(ox, in.width, out_w), x1 = partition_end(ox, in.width, out_w);
                const S inv = S(1) / static_cast<S>((y1 - y0) * (x1 - x0));
                for (Index c = 0; c < d; ++c) {
                    S acc = 0;
                    for (Index y = y0; y < y1; ++y)
                        for (Index xx = x0; xx < x1; ++xx) acc += xd[((b * in.height + y) * in.width + xx) * d + c];
                    out[((b * out_h + oy) * out_w + ox) * d + c] = acc * inv;
                }
            }
        }
    return x.tape().record(std::move(out), {x}, [x, in, out_h, out_w, d](const Tensor<S>& g, Tape<S>& t) {
        auto* gx = t.grad_buffer(x);
        if (!gx) return;
        for (Index b = 0; b < in.batch; ++b)
            for (Index oy = 0; oy < out_h; ++oy) {
                const Index y0 = partition_begin(oy, in.height, out_h), y1 = partition_end(oy, in.height, out_h);
                for (Index ox = 0; ox < out_w; ++ox) {
                    const Index x0 = partition_begin(ox, in.width, out_w), x1 = partition_end(ox, in.width, out_w);
                    const S inv = S(1) / static_cast<S>((y1 - y0) * (x1 - x0));
                    for (Index c = 0; c < d; ++c) {
                        const S share = g[((b * out_h + oy) * out_w + ox) * d + c] * inv;
                        for (Index y = y0; y < y1; ++y)
                            for (Index xx = x0; xx < x1; ++xx) (*gx)[((b * in.height + y) * in.width + xx) * d + c] += share;
                    }
                }
            }
    });
}

template <typename S>
Var<S> l2_normalize_rows(const Var<S>& m, Scalar_t<S> eps) {
    const Index rows = rows_of(m.value()), cols = cols_of(m.value());
    Vector<S> norms = m.value().matrix().rowwise().norm();
    Vector<S> denom = norms.cwiseMax(eps);
    Tensor<S> out(m.shape());
    out.as_matrix(rows, cols) = denom.cwiseInverse().asDiagonal() * m.value().matrix();
    Tensor<S> yv = out;
    return m.tape().record(std::move(out), {m},
                           [m, rows, cols, eps, norms = std::move(norms), denom = std::move(denom),
                            yv = std::move(yv)](const Tensor<S>& g, Tape<S>& t) {
                               auto* gm = t.grad_buffer(m);
                               if (!gm) return;
                               MatrixMap<S> gmm(gm->data(), rows, cols);
                               const auto gg = g.as_matrix(rows, cols);
                               const auto ym = yv.as_matrix(rows, cols);
                               for (Index i = 0; i < rows; ++i) {
                                   if (norms[i] > eps) {
                                       const S proj = ym.row(i).dot(gg.row(i));
                                       gmm.row(i) += (gg.row(i) - proj * ym.row(i)) / denom[i];
                                   } else {
                                       gmm.row(i) += gg.row(i) / denom[i];
                                   }
                               }
                           });
}

template <typename S>
Var<S> log_softmax_rows(const Var<S>& m) {
    const Index rows = rows_of(m.value()), cols = cols_of(m.value());
    const auto mv = m.value().matrix();
    Tensor<S> out(m.shape());
    auto om = out.as_matrix(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const S mx = mv.row(i).maxCoeff();
        const S lse = mx + std::log((mv.row(i).array() - mx).exp().sum());
        om.row(i) = mv.row(i).array() - lse;
    }
    Tensor<S> saved = out;
    return m.tape().record(std::move(out), {m}, [m, rows, cols, saved = std::move(saved)](const Tensor<S>& g, Tape<S>& t) {
        auto* gm = t.grad_buffer(m);
        if (!gm) return;
        MatrixMap<S> gmm(gm->data(), rows, cols);
        const auto gg = g.as_matrix(rows, cols);
        const auto y = saved.as_matrix(rows, cols);
        for (Index i = 0; i < rows; ++i) gmm.row(i) += gg.row(i) - gg.row(i).sum() * y.row(i).array().exp().matrix();
    });
}

template <typename S>
Var<S> logsumexp_rows(const Var<S>& m) {
    const Index rows = rows_of(m.value()), cols = cols_of(m.value());
    const auto mv = m.value().matrix();
    Tensor<S> out({rows});
    Matrix<S> soft(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const S mx = mv.row(i).maxCoeff();
        const auto e = (mv.row(i).array() - mx).exp();
        const S z = e.sum();
        out[i] = mx + std::log(z);
        soft.row(i) = e / z;
    }
    return m.tape().record(std::move(out), {m}, [m, rows, cols, soft = std::move(soft)](const Tensor<S>& g, Tape<S>& t) {
        if (auto* gm = t.grad_buffer(m)) MatrixMap<S>(gm->data(), rows, cols) += g.values().asDiagonal() * soft;
    });
}

template <typename S>
Var<S> scale_gradient(const Var<S>& x, Scalar_t<S> factor) {
    return x.tape().record(x.value(), {x}, [x, factor](const Tensor<S>& g, Tape<S>& t) {
        if (auto* gx = t.grad_buffer(x)) *gx += g.values() * factor;
    });
}

#define FSUDA_INSTANTIATE_OPS(S)                                                        \
    template Var<S> matmul(const Var<S>&, const Var<S>&);                               \
    template Var<S> transpose(const Var<S>&);                                           \
    template Var<S> add(const Var<S>&, const Var<S>&);                                  \
    template Var<S> sub(const Var<S>&, const Var<S>&);                                  \
    template Var<S> mul(const Var<S>&, const Var<S>&);                                  \
    template Var<S> scale(const Var<S>&, S);                                            \
    template Var<S> add_scalar(const Var<S>&, S);                                       \
    template Var<S> scale_by(const Var<S>&, const Var<S>&);                             \
    template Var<S> add_channelwise(const Var<S>&, const Var<S>&);                      \
    template Var<S> mul_channelwise(const Var<S>&, const Var<S>&);                      \
    template Var<S> relu(const Var<S>&);                                                \
    template Var<S> sigmoid(const Var<S>&);                                             \
    template Var<S> log(const Var<S>&);                                                 \
    template Var<S> exp(const Var<S>&);                                                 \
    template Var<S> clamp(const Var<S>&, S, S);                                         \
    template Var<S> sum(const Var<S>&);                                                 \
    template Var<S> mean(const Var<S>&);                                                \
    template Var<S> row_sum(const Var<S>&);                                             \
    template Var<S> col_mean(const Var<S>&);                                            \
    template Var<S> sum_row_groups(const Var<S>&, Index);                               \
    template Var<S> trace(const Var<S>&);                                               \
    template Var<S> frobenius_squared(const Var<S>&);                                   \
    template Var<S> reshape(const Var<S>&, Shape);                                      \
    template Var<S> slice(const Var<S>&, Index, Index);                                 \
    template Var<S> slice_cols(const Var<S>&, Index, Index);                            \
    template Var<S> concat(const std::vector<Var<S>>&);                                 \
    template Var<S> gather_cols(const Var<S>&, const Matrix<Index>&);                   \
    template Var<S> mask(const Var<S>&, const Tensor<S>&);                              \
    template Var<S> conv2d(const Var<S>&, const Var<S>&, Index, Index);                 \
    template Var<S> pool2d(const Var<S>&, PoolMode, const PoolGeometry&);               \
    template Var<S> adaptive_avg_pool2d(const Var<S>&, Index, Index);                   \
    template Var<S> l2_normalize_rows(const Var<S>&, S);                                \
    template Var<S> log_softmax_rows(const Var<S>&);                                    \
    template Var<S> logsumexp_rows(const Var<S>&);                                      \
    template Var<S> scale_gradient(const Var<S>&, S);

FSUDA_INSTANTIATE_OPS(float)
FSUDA_INSTANTIATE_OPS(double)

}  // namespace fsuda
