#include "fsuda/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fsuda::oracle {

namespace {

Index rows(const Mat& m) { return m.extent(0); }
Index cols(const Mat& m) { return m.size() / m.extent(0); }
double get(const Mat& m, Index r, Index c) { return m[r * cols(m) + c]; }

}  // namespace

Mat matmul(const Mat& a, const Mat& b) {
    if (cols(a) != rows(b)) throw std::invalid_argument("oracle matmul: inner extents differ");
    Mat out({rows(a), cols(b)});
    for (Index i = 0; i < rows(a); ++i)
        for (Index j = 0; j < cols(b); ++j) {
            double acc = 0;
            for (Index k = 0; k < cols(a); ++k) acc += get(a, i, k) * get(b, k, j);
            out[i * cols(b) + j] = acc;
        }
    return out;
}

Mat conv2d(const Mat& x, const Mat& w, Index stride, Index padding) {
    const Index batch = x.extent(0), h = x.extent(1), wd = x.extent(2), ci = x.extent(3);
    const Index kh = w.extent(0), kw = w.extent(1), co = w.extent(3);
    const Index oh = (h + 2 * padding - kh) / stride + 1, ow = (wd + 2 * padding - kw) / stride + 1;
    Mat out({batch, oh, ow, co});
    for (Index b = 0; b < batch; ++b)
        for (Index y = 0; y < oh; ++y)
            for (Index xx = 0; xx < ow; ++xx)
                for (Index o = 0; o < co; ++o) {
                    double acc = 0;
                    for (Index ky = 0; ky < kh; ++ky)
                        for (Index kx = 0; kx < kw; ++kx) {
                            const Index iy = y * stride + ky - padding, ix = xx * stride + kx - padding;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                            for (Index c = 0; c < ci; ++c)
                                acc += x.at({b, iy, ix, c}) * w.at({ky, kx, c, o});
                        }
                    out.at({b, y, xx, o}) = acc;
                }
    return out;
}

Mat cosine(const Mat& q, const Mat& s) {
    const Index c = cols(q);
    Mat out({rows(q), rows(s)});
    for (Index i = 0; i < rows(q); ++i)
        for (Index j = 0; j < rows(s); ++j) {
            double dot = 0, nq = 0, ns = 0;
            for (Index k = 0; k < c; ++k) {
                dot += get(q, i, k) * get(s, j, k);
                nq += get(q, i, k) * get(q, i, k);
                ns += get(s, j, k) * get(s, j, k);
            }
            out[i * rows(s) + j] = dot / (std::max(std::sqrt(nq), 1e-12) * std::max(std::sqrt(ns), 1e-12));
        }
    return out;
}

Mat topk(const Mat& m, Index k, Index block) {
    Mat out(m.shape());
    const Index n = cols(m);
    for (Index r = 0; r < rows(m); ++r)
        for (Index b0 = 0; b0 < n; b0 += block)
            for (Index j = b0; j < b0 + block; ++j) {
                // Rank of j: entries strictly larger, or equal with a lower index.
                Index ahead = 0;
                for (Index o = b0; o < b0 + block; ++o)
                    if (get(m, r, o) > get(m, r, j) || (get(m, r, o) == get(m, r, j) && o < j)) ++ahead;
                if (ahead < k) out[r * n + j] = get(m, r, j);
            }
    return out;
}

std::vector<double> encode_pattern(const Mat& sim, Index height, Index width, double sigma) {
    const Index j_count = cols(sim);
    std::vector<double> smoothed(static_cast<std::size_t>(height * width * j_count));
    for (Index y = 0; y < height; ++y)
        for (Index x = 0; x < width; ++x)
            for (Index j = 0; j < j_count; ++j) {
                double acc = 0, norm = 0;
                for (Index dy = -1; dy <= 1; ++dy)
                    for (Index dx = -1; dx <= 1; ++dx) {
                        const Index yy = y + dy, xx = x + dx;
                        if (yy < 0 || yy >= height || xx < 0 || xx >= width) continue;
                        const double g = std::exp(-static_cast<double>(dx * dx + dy * dy) / (2 * sigma * sigma));
                        acc += g * get(sim, yy * width + xx, j);
                        norm += g;
                    }
                smoothed[static_cast<std::size_t>((y * width + x) * j_count + j)] = acc / norm;
            }
    std::vector<double> pattern(static_cast<std::size_t>(j_count), 0.0);
    for (Index py = 0; py < height; py += 2)
        for (Index px = 0; px < width; px += 2)
            for (Index j = 0; j < j_count; ++j) {
                double best = -INFINITY;
                for (Index y = py; y < std::min(py + 2, height); ++y)
                    for (Index x = px; x < std::min(px + 2, width); ++x)
                        best = std::max(best, smoothed[static_cast<std::size_t>((y * width + x) * j_count + j)]);
                pattern[static_cast<std::size_t>(j)] += best;
            }
    return pattern;
}

double cross_entropy(const Mat& scores, const std::vector<Index>& labels) {
    double total = 0;
    for (Index r = 0; r < rows(scores); ++r) {
        double z = 0;
        for (Index c = 0; c < cols(scores); ++c) z += std::exp(get(scores, r, c));
        total += -std::log(std::exp(get(scores, r, labels[static_cast<std::size_t>(r)])) / z);
    }
    return total / static_cast<double>(rows(scores));
}

Mat covariance(const Mat& patterns) {
    const Index n = rows(patterns), d = cols(patterns);
    std::vector<double> mu(static_cast<std::size_t>(d), 0.0);
    for (Index i = 0; i < n; ++i)
        for (Index a = 0; a < d; ++a) mu[static_cast<std::size_t>(a)] += get(patterns, i, a) / static_cast<double>(n);
    Mat out({d, d});
    for (Index i = 0; i < n; ++i)
        for (Index a = 0; a < d; ++a)
            for (Index b = 0; b < d; ++b)
                out[a * d + b] += (get(patterns, i, a) - mu[static_cast<std::size_t>(a)]) *
                                  (get(patterns, i, b) - mu[static_cast<std::size_t>(b)]) / static_cast<double>(n - 1);
    return out;
}

double spa(const std::vector<Mat>& source, const std::vector<Mat>& target) {
    double total = 0;
    for (std::size_t i = 0; i < source.size(); ++i) {
        const Mat cs = covariance(source[i]), ct = covariance(target[i]);
        for (Index e = 0; e < cs.size(); ++e) total += (cs[e] - ct[e]) * (cs[e] - ct[e]);
    }
    return total / static_cast<double>(source.size());
}

double rspa(const std::vector<Mat>& sets) {
    double total = 0;
    for (const auto& set : sets) {
        const Mat c = covariance(set);
        const Index d = c.extent(0);
        double tr = 0;
        for (Index a = 0; a < d; ++a) tr += c[a * d + a];
        const double lambda = tr / static_cast<double>(d);
        for (Index a = 0; a < d; ++a)
            for (Index b = 0; b < d; ++b) {
                const double v = c[a * d + b] - (a == b ? lambda : 0.0);
                total += v * v;
            }
    }
    return total / static_cast<double>(sets.size());
}

double adv(const std::vector<double>& source_prob, const std::vector<double>& target_prob) {
    auto clip = [](double p) { return std::clamp(p, 1e-7, 1 - 1e-7); };
    double s = 0, t = 0;
    for (double p : source_prob) s += std::log(1 - clip(p));
    for (double p : target_prob) t += std::log(clip(p));
    return s / static_cast<double>(source_prob.size()) + t / static_cast<double>(target_prob.size());
}

double msm(const Mat& target_lds, const Mat& support_lds, Index target_queries, Index k, Index n) {
    const Mat sims = cosine(target_lds, support_lds);
    const Index m = cols(sims);
    double total = 0;
    for (Index r = 0; r < rows(sims); ++r) {
        std::vector<Index> order(static_cast<std::size_t>(m));
        std::iota(order.begin(), order.end(), Index(0));
        std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return get(sims, r, a) > get(sims, r, b); });
        double z = 0;
        for (Index i = 0; i < n; ++i) z += std::exp(get(sims, r, order[static_cast<std::size_t>(i)]));
        for (Index i = 0; i < k; ++i) total -= std::log(std::exp(get(sims, r, order[static_cast<std::size_t>(i)])) / z);
    }
    return total / static_cast<double>(target_queries);
}

}  // namespace fsuda::oracle
