#include "fsuda/simpattern.hpp"

#include "fsuda/embedding.hpp"
#include "fsuda/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fsuda {

namespace {
const PoolGeometry kPatternPool{2, 2, true};
}

template <typename S>
Var<S> cosine_matrix(const Var<S>& query_lds, const Var<S>& support_lds) {
    if (query_lds.value().rank() != 2 || support_lds.value().rank() != 2 ||
        query_lds.extent(1) != support_lds.extent(1))
        throw std::invalid_argument("cosine_matrix: descriptor widths differ, " + shape_string(query_lds.shape()) +
                                    " vs " + shape_string(support_lds.shape()));
    return matmul(l2_normalize_rows(query_lds), transpose(l2_normalize_rows(support_lds)));
}

template <typename S>
Tensor<S> topk_gate(const Tensor<S>& m, Index k, Index block) {
    if (k < 1) throw std::invalid_argument("topk: k must be at least 1");
    const Index rows = m.extent(0), cols = m.size() / rows;
    if (block == 0) block = cols;
    if (cols % block != 0)
        throw std::invalid_argument("topk: " + std::to_string(cols) + " columns in blocks of " + std::to_string(block));
    Tensor<S> gate(m.shape());
    const auto mv = m.as_matrix(rows, cols);
    auto gv = gate.as_matrix(rows, cols);
    std::vector<Index> order(static_cast<std::size_t>(block));
    const Index keep = std::min(k, block);
    for (Index r = 0; r < rows; ++r)
        for (Index b0 = 0; b0 < cols; b0 += block) {
            std::iota(order.begin(), order.end(), b0);
            std::partial_sort(order.begin(), order.begin() + keep, order.end(), [&](Index a, Index b) {
                if (mv(r, a) != mv(r, b)) return mv(r, a) > mv(r, b);
                return a < b;
            });
            for (Index i = 0; i < keep; ++i) gv(r, order[static_cast<std::size_t>(i)]) = S(1);
        }
    return gate;
}

template <typename S>
Var<S> topk_sparsify(const Var<S>& m, Index k, Index block) {
    return mask(m, topk_gate(m.value(), k, block));
}

std::array<double, 9> gaussian_weights(double sigma) {
    std::array<double, 9> w{};
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
            w[static_cast<std::size_t>((dy + 1) * 3 + dx + 1)] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
    return w;
}

template <typename S>
Var<S> gaussian_smooth(const Var<S>& volume, double sigma) {
    const Tensor<S>& v = volume.value();
    if (v.rank() != 4) throw std::invalid_argument("gaussian_smooth: expected [B,H,W,J], got " + shape_string(v.shape()));
    const Index batch = v.extent(0), h = v.extent(1), w = v.extent(2), j = v.extent(3);
    const auto raw = gaussian_weights(sigma);

    // Per-position normalized weights; out-of-bounds taps are zero.
    std::vector<std::array<S, 9>> taps(static_cast<std::size_t>(h * w));
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            double total = 0;
            std::array<double, 9> t{};
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (y + dy < 0 || y + dy >= h || x + dx < 0 || x + dx >= w) continue;
                    const auto k = static_cast<std::size_t>((dy + 1) * 3 + dx + 1);
                    t[k] = raw[k];
                    total += raw[k];
                }
            auto& dst = taps[static_cast<std::size_t>(y * w + x)];
            for (std::size_t k = 0; k < 9; ++k) dst[k] = static_cast<S>(t[k] / total);
        }

    Tensor<S> out(v.shape());
    const auto in_plane = [h, w, j](Index b, Index y, Index x) { return ((b * h + y) * w + x) * j; };
    for (Index b = 0; b < batch; ++b)
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) {
                auto dst = out.values().segment(in_plane(b, y, x), j);
                const auto& t = taps[static_cast<std::size_t>(y * w + x)];
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const S wt = t[static_cast<std::size_t>((dy + 1) * 3 + dx + 1)];
                        if (wt == S(0)) continue;
                        dst += wt * v.values().segment(in_plane(b, y + dy, x + dx), j);
                    }
            }

    return volume.tape().record(std::move(out), {volume}, [volume, batch, h, w, j, taps = std::move(taps),
                                                            in_plane](const Tensor<S>& g, Tape<S>& t) {
        auto* gv = t.grad_buffer(volume);
        if (!gv) return;
        for (Index b = 0; b < batch; ++b)
            for (Index y = 0; y < h; ++y)
                for (Index x = 0; x < w; ++x) {
                    const auto src = g.values().segment(in_plane(b, y, x), j);
                    const auto& tp = taps[static_cast<std::size_t>(y * w + x)];
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const S wt = tp[static_cast<std::size_t>((dy + 1) * 3 + dx + 1)];
                            if (wt == S(0)) continue;
                            gv->segment(in_plane(b, y + dy, x + dx), j) += wt * src;
                        }
                }
    });
}

Index pooled_positions(Index height, Index width) {
    return pooled_extent(height, kPatternPool) * pooled_extent(width, kPatternPool);
}

template <typename S>
Var<S> encode_patterns(const Var<S>& sims, Index height, Index width, double sigma) {
    const Index plane = height * width;
    if (sims.value().rank() != 2 || sims.extent(0) % plane != 0)
        throw std::invalid_argument("encode_pattern: " + shape_string(sims.shape()) + " rows are not a multiple of " +
                                    std::to_string(height) + "x" + std::to_string(width));
    const Index batch = sims.extent(0) / plane, cols = sims.extent(1);
    const Var<S> volume = reshape(sims, {batch, height, width, cols});
    const Var<S> pooled = pool2d(gaussian_smooth(volume, sigma), PoolMode::kMax, kPatternPool);
    const Index positions = pooled.extent(1) * pooled.extent(2);
    return sum_row_groups(reshape(pooled, {batch * positions, cols}), positions);
}

template <typename S>
Var<S> encode_pattern(const Var<S>& sim, Index height, Index width, double sigma) {
    if (sim.value().rank() != 2 || sim.extent(0) != height * width)
        throw std::invalid_argument("encode_pattern: " + shape_string(sim.shape()) + " does not have " +
                                    std::to_string(height * width) + " rows");
    return reshape(encode_patterns(sim, height, width, sigma), {sim.extent(1)});
}

template <typename S>
Var<S> similarity_patterns(const Var<S>& query_lds, const Var<S>& support_lds, Index height, Index width,
                           Index shots, const EncoderConfig& config) {
    const Index class_block = shots * height * width;
    if (support_lds.extent(0) % class_block != 0)
        throw std::invalid_argument("similarity_patterns: support rows " + std::to_string(support_lds.extent(0)) +
                                    " are not whole classes of " + std::to_string(class_block));
    const Var<S> sims = topk_sparsify(cosine_matrix(query_lds, support_lds), config.top_k, class_block);
    return encode_patterns(sims, height, width, config.sigma);
}

template <typename S>
Var<S> class_scores(const Var<S>& patterns, Index ways) {
    const Index queries = patterns.extent(0), cols = patterns.size() / queries;
    if (ways < 1 || cols % ways != 0)
        throw std::invalid_argument("class_scores: " + std::to_string(cols) + " pattern entries for " +
                                    std::to_string(ways) + " classes");
    return reshape(row_sum(reshape(patterns, {queries * ways, cols / ways})), {queries, ways});
}

template <typename S>
Var<S> cls_loss(const Var<S>& scores, std::span<const Index> labels) {
    const Index queries = scores.extent(0), ways = scores.size() / queries;
    if (queries < 1 || static_cast<Index>(labels.size()) != queries)
        throw std::invalid_argument("cls_loss: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(queries) + " queries");
    Matrix<Index> target(queries, 1);
    for (Index i = 0; i < queries; ++i) {
        const Index l = labels[static_cast<std::size_t>(i)];
        if (l < 0 || l >= ways)
            throw std::invalid_argument("cls_loss: label " + std::to_string(l) + " outside 0.." +
                                        std::to_string(ways - 1));
        target(i, 0) = l;
    }
    return -mean(gather_cols(log_softmax_rows(scores), target));
}

template <typename S>
Index argmax(std::span<const S> values) {
    if (values.empty()) throw std::invalid_argument("argmax of empty range");
    Index best = 0;
    for (Index i = 1; i < static_cast<Index>(values.size()); ++i)
        if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(best)]) best = i;
    return best;
}

template <typename S>
std::vector<Index> predict(const Tensor<S>& scores) {
    const Index rows = scores.extent(0), cols = scores.size() / rows;
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(rows));
    for (Index r = 0; r < rows; ++r)
        out.push_back(argmax(std::span<const S>(scores.data() + r * cols, static_cast<std::size_t>(cols))));
    return out;
}

template <typename S>
SupportContext<S>::SupportContext(Tensor<S> support_maps, Index ways, Index shots, EncoderConfig config)
    : support_maps_(std::move(support_maps)), ways_(ways), shots_(shots), config_(config) {
    if (support_maps_.rank() != 4 || support_maps_.extent(0) != ways * shots)
        throw std::invalid_argument("SupportContext: expected " + std::to_string(ways * shots) + " support maps, got " +
                                    shape_string(support_maps_.shape()));
}

template <typename S>
Tensor<S> SupportContext<S>::scores(const Tensor<S>& query_maps) const {
    Tape<S> tape(false);
    const Index h = support_maps_.extent(1), w = support_maps_.extent(2);
    const Var<S> q = extract_lds(tape.constant(query_maps));
    const Var<S> s = extract_lds(tape.constant(support_maps_));
    return class_scores(similarity_patterns(q, s, h, w, shots_, config_), ways_).value();
}

template <typename S>
Index SupportContext<S>::classify(const Tensor<S>& query_map) const {
    const Tensor<S> sc = scores(query_map);
    return argmax(std::span<const S>(sc.data(), static_cast<std::size_t>(sc.size())));
}

template class SupportContext<float>;
template class SupportContext<double>;

#define FSUDA_INSTANTIATE_SIMPATTERN(S)                                                              \
    template Var<S> cosine_matrix(const Var<S>&, const Var<S>&);                                     \
    template Tensor<S> topk_gate(const Tensor<S>&, Index, Index);                                    \
    template Var<S> topk_sparsify(const Var<S>&, Index, Index);                                      \
    template Var<S> gaussian_smooth(const Var<S>&, double);                                          \
    template Var<S> encode_patterns(const Var<S>&, Index, Index, double);                            \
    template Var<S> encode_pattern(const Var<S>&, Index, Index, double);                             \
    template Var<S> similarity_patterns(const Var<S>&, const Var<S>&, Index, Index, Index,           \
                                        const EncoderConfig&);                                       \
    template Var<S> class_scores(const Var<S>&, Index);                                              \
    template Var<S> cls_loss(const Var<S>&, std::span<const Index>);                                 \
    template Index argmax(std::span<const S>);                                                       \
    template std::vector<Index> predict(const Tensor<S>&);

FSUDA_INSTANTIATE_SIMPATTERN(float)
FSUDA_INSTANTIATE_SIMPATTERN(double)

}  // namespace fsuda
