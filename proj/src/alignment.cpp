#include "fsuda/alignment.hpp"

#include "fsuda/ops.hpp"
#include "fsuda/random.hpp"
#include "fsuda/simpattern.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsuda {

void LossWeights::validate() const {
    for (double w : {spa, adv, msm})
        if (!std::isfinite(w) || w < 0) throw std::invalid_argument("loss weights must be finite and non-negative");
}

template <typename S>
Var<S> covariance(const Var<S>& patterns) {
    if (patterns.value().rank() != 2) throw std::invalid_argument("covariance: expected [n x d] patterns");
    const Index n = patterns.extent(0);
    if (n < 2) throw std::invalid_argument("covariance needs at least 2 patterns, got " + std::to_string(n));
    const Var<S> centered = add_channelwise(patterns, -col_mean(patterns));
    return matmul(transpose(centered), centered) * (S(1) / static_cast<S>(n - 1));
}

template <typename S>
Var<S> spa_loss(std::span<const Var<S>> source_sets, std::span<const Var<S>> target_sets) {
    if (source_sets.empty() || source_sets.size() != target_sets.size())
        throw std::invalid_argument("spa_loss: " + std::to_string(source_sets.size()) + " source sets paired with " +
                                    std::to_string(target_sets.size()) + " target sets");
    std::vector<Var<S>> terms;
    for (std::size_t i = 0; i < source_sets.size(); ++i) {
        if (source_sets[i].extent(1) != target_sets[i].extent(1))
            throw std::invalid_argument("spa_loss: pattern lengths differ for support image " + std::to_string(i));
        terms.push_back(frobenius_squared(covariance(source_sets[i]) - covariance(target_sets[i])));
    }
    return mean(concat(terms));
}

template <typename S>
Var<S> rspa_loss(std::span<const Var<S>> sets) {
    if (sets.empty()) throw std::invalid_argument("rspa_loss: no pattern sets");
    std::vector<Var<S>> terms;
    for (const auto& set : sets) {
        const Var<S> cov = covariance(set);
        const Index d = cov.extent(0);
        Tape<S>& tape = cov.tape();
        const Var<S> level = trace(cov) * (S(1) / static_cast<S>(d));
        terms.push_back(frobenius_squared(cov - scale_by(tape.constant(Tensor<S>::identity(d)), level)));
    }
    return mean(concat(terms));
}

template <typename S>
Discriminator<S>::Discriminator(Index channels, std::uint64_t seed) : channels_(channels) {
    if (channels < 4) throw std::invalid_argument("discriminator needs at least 4 input channels");
    const Index widths[] = {channels, channels / 2, std::max<Index>(1, channels / 4), 1};
    Rng rng(derive_seed({seed, 0xD15Cu}));
    for (int l = 0; l < 3; ++l) {
        Tensor<S> w({widths[l], widths[l + 1]});
        const double std_dev = std::sqrt(2.0 / static_cast<double>(widths[l]));
        for (Index i = 0; i < w.size(); ++i) w[i] = static_cast<S>(std_dev * standard_normal(rng));
        params_.add("disc.fc" + std::to_string(l) + ".weight", std::move(w));
        params_.add("disc.fc" + std::to_string(l) + ".bias", Tensor<S>({widths[l + 1]}));
    }
}

template <typename S>
Var<S> Discriminator<S>::forward(Tape<S>& tape, const Var<S>& lds, AdversarialMode mode) {
    if (lds.value().rank() != 2 || lds.extent(1) != channels_)
        throw std::invalid_argument("discriminator: expected [r x " + std::to_string(channels_) + "], got " +
                                    shape_string(lds.shape()));
    auto read = [&](std::size_t i) {
        const Var<S> p = tape.param(params_[i]);
        return mode == AdversarialMode::kReversal ? scale_gradient(p, S(-1)) : p;
    };
    Var<S> x = lds;
    for (std::size_t l = 0; l < 3; ++l) {
        x = add_channelwise(matmul(x, read(2 * l)), read(2 * l + 1));
        if (l < 2) x = relu(x);
    }
    return clamp(sigmoid(x), S(1e-7), S(1) - S(1e-7));
}

template <typename S>
Var<S> adv_loss(Tape<S>& tape, const Var<S>& source_lds, const Var<S>& target_lds, Discriminator<S>& disc,
                AdversarialMode mode) {
    if (source_lds.extent(0) < 1 || target_lds.extent(0) < 1)
        throw std::invalid_argument("adv_loss needs descriptors from both domains");
    const Index ns = source_lds.extent(0), nt = target_lds.extent(0);
    const Var<S> prob = disc.forward(tape, concat(std::vector<Var<S>>{source_lds, target_lds}), mode);
    const Var<S> source_term = mean(log(add_scalar(-slice(prob, 0, ns), S(1))));
    const Var<S> target_term = mean(log(slice(prob, ns, nt)));
    return source_term + target_term;
}

template <typename S>
Matrix<Index> top_n_indices(const Tensor<S>& m, Index n) {
    const Index rows = m.extent(0), cols = m.size() / rows;
    if (n < 1 || n > cols)
        throw std::invalid_argument("top_n_indices: n=" + std::to_string(n) + " for " + std::to_string(cols) +
                                    " columns");
    const auto mv = m.as_matrix(rows, cols);
    Matrix<Index> out(rows, n);
    std::vector<Index> order(static_cast<std::size_t>(cols));
    for (Index r = 0; r < rows; ++r) {
        std::iota(order.begin(), order.end(), Index(0));
        std::partial_sort(order.begin(), order.begin() + n, order.end(), [&](Index a, Index b) {
            if (mv(r, a) != mv(r, b)) return mv(r, a) > mv(r, b);
            return a < b;
        });
        for (Index j = 0; j < n; ++j) out(r, j) = order[static_cast<std::size_t>(j)];
    }
    return out;
}

template <typename S>
Var<S> msm_loss(const Var<S>& target_lds, const Var<S>& multiscale_lds, Index target_queries,
                const MsmConfig& config) {
    if (config.k <= 1) throw std::invalid_argument("msm_loss: k must exceed 1, got " + std::to_string(config.k));
    if (config.n < config.k || config.n > multiscale_lds.extent(0))
        throw std::invalid_argument("msm_loss: need k <= n <= " + std::to_string(multiscale_lds.extent(0)) +
                                    ", got k=" + std::to_string(config.k) + " n=" + std::to_string(config.n));
    if (target_queries < 1) throw std::invalid_argument("msm_loss: no target queries");
    const Var<S> sims = cosine_matrix(target_lds, multiscale_lds);
    const Var<S> nearest = gather_cols(sims, top_n_indices(sims.value(), config.n));
    const Var<S> per_ld = logsumexp_rows(nearest) * static_cast<S>(config.k) - row_sum(slice_cols(nearest, 0, config.k));
    return sum(per_ld) * (S(1) / static_cast<S>(target_queries));
}

template class Discriminator<float>;
template class Discriminator<double>;

#define FSUDA_INSTANTIATE_ALIGNMENT(S)                                                                  \
    template Var<S> covariance(const Var<S>&);                                                          \
    template Var<S> spa_loss(std::span<const Var<S>>, std::span<const Var<S>>);                         \
    template Var<S> rspa_loss(std::span<const Var<S>>);                                                 \
    template Var<S> adv_loss(Tape<S>&, const Var<S>&, const Var<S>&, Discriminator<S>&, AdversarialMode); \
    template Var<S> msm_loss(const Var<S>&, const Var<S>&, Index, const MsmConfig&);                    \
    template Matrix<Index> top_n_indices(const Tensor<S>&, Index);

FSUDA_INSTANTIATE_ALIGNMENT(float)
FSUDA_INSTANTIATE_ALIGNMENT(double)

}  // namespace fsuda
