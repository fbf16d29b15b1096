#ifndef FSUDA_ALIGNMENT_HPP
#define FSUDA_ALIGNMENT_HPP

#include "fsuda/autodiff.hpp"

#include <cstdint>
#include <span>

namespace fsuda {

/// Weights of the alignment terms in the episode objective.
struct LossWeights {
    double spa = 0.1;
    double adv = 0.05;
    double msm = 0.1;

    void validate() const;
};

/// Unbiased covariance of a pattern set stored as rows [n x d], n >= 2:
/// (1/(n-1)) sum (p - mean)(p - mean)'.
template <typename S>
Var<S> covariance(const Var<S>& patterns);

/// Mean over paired support images of ||cov(source_i) - cov(target_i)||_F^2.
template <typename S>
Var<S> spa_loss(std::span<const Var<S>> source_sets, std::span<const Var<S>> target_sets);

/// Mean over support images of ||cov_i - (tr(cov_i)/d) I||_F^2 for one domain.
template <typename S>
Var<S> rspa_loss(std::span<const Var<S>> sets);

enum class AdversarialMode {
    /// Ordinary gradient of the objective everywhere.
    kPlain,
    /// Discriminator parameters receive the negated gradient so one descent
    /// step lowers the objective in F and raises the adversarial term in D.
    kReversal,
};

/// Domain discriminator: C -> C/2 -> C/4 -> 1 fully connected layers with
/// ReLU between them and a sigmoid output clamped to [1e-7, 1 - 1e-7].
template <typename S>
class Discriminator {
public:
    Discriminator(Index channels, std::uint64_t seed);

    /// lds [r x C] to probabilities of the target domain [r x 1].
    Var<S> forward(Tape<S>& tape, const Var<S>& lds, AdversarialMode mode = AdversarialMode::kPlain);

    ParameterSet<S>& parameters() { return params_; }
    const ParameterSet<S>& parameters() const { return params_; }
    Index channels() const { return channels_; }

private:
    Index channels_;
    ParameterSet<S> params_;
};

/// mean_source log(1 - D(l)) + mean_target log D(l).
template <typename S>
Var<S> adv_loss(Tape<S>& tape, const Var<S>& source_lds, const Var<S>& target_lds, Discriminator<S>& disc,
                AdversarialMode mode = AdversarialMode::kPlain);

struct MsmConfig {
    /// Neighbors pulled toward each target descriptor (k > 1).
    Index k = 3;
    /// Neighbors entering the softmax normalizer (k <= n).
    Index n = 10;
};

/// Multi-scale matching: for each target descriptor, cosine similarities to
/// the pooled support descriptors sorted descending (ties by index), then
/// -sum_{i<=k} log softmax over the top n. Summed over descriptors and
/// divided by the number of target query images. The neighbor selection is
/// a fixed choice; gradients flow through the selected similarities.
template <typename S>
Var<S> msm_loss(const Var<S>& target_lds, const Var<S>& multiscale_lds, Index target_queries,
                const MsmConfig& config);

/// Column indices of the n largest entries of every row, descending, ties by index.
template <typename S>
Matrix<Index> top_n_indices(const Tensor<S>& m, Index n);

extern template class Discriminator<float>;
extern template class Discriminator<double>;

}  // namespace fsuda

#endif  // FSUDA_ALIGNMENT_HPP
