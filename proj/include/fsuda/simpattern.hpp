#ifndef FSUDA_SIMPATTERN_HPP
#define FSUDA_SIMPATTERN_HPP

#include "fsuda/autodiff.hpp"

#include <array>
#include <span>
#include <vector>

namespace fsuda {

struct EncoderConfig {
    Index top_k = 3;
    double sigma = 0.8;
};

/// Cosine similarities between query descriptors [r x C] (rows) and support
/// descriptors [m x C] (columns), each row L2-normalized with the 1e-12 guard.
template <typename S>
Var<S> cosine_matrix(const Var<S>& query_lds, const Var<S>& support_lds);

/// 0/1 gate keeping the k largest entries of every row within each
/// consecutive column block (block = 0 means the whole row). Ties go to the
/// lower column index.
template <typename S>
Tensor<S> topk_gate(const Tensor<S>& m, Index k, Index block = 0);

/// Zeroes all but the top-k entries per row (per column block). Dropped
/// entries receive no gradient.
template <typename S>
Var<S> topk_sparsify(const Var<S>& m, Index k, Index block = 0);

/// Unnormalized 3x3 weights exp(-(dx^2 + dy^2) / (2 sigma^2)), row-major dy, dx.
std::array<double, 9> gaussian_weights(double sigma);

/// 3x3 Gaussian smoothing of every channel of [B,H,W,J] over the H x W plane,
/// stride 1. At borders the in-bounds weights are renormalized to sum to one.
template <typename S>
Var<S> gaussian_smooth(const Var<S>& volume, double sigma);

/// Number of 2x2/2 ceil-mode pooled positions of an H x W plane.
Index pooled_positions(Index height, Index width);

/// Similarity matrices [B*H*W x J] (query-image-major, raster rows) to
/// patterns [B x J]: reshape to [B,H,W,J], Gaussian smoothing, 2x2/2
/// ceil-mode max-pool, then a sum over the pooled positions per column.
template <typename S>
Var<S> encode_patterns(const Var<S>& sims, Index height, Index width, double sigma = 0.8);

/// Single-query form: [H*W x J] to a pattern of length J.
template <typename S>
Var<S> encode_pattern(const Var<S>& sim, Index height, Index width, double sigma = 0.8);

/// Full encoder for a batch of queries against an N-way support set whose
/// descriptors are class-major (each class block holds shots*H*W rows).
/// Returns [Q x N*shots*H*W]; columns are support-image-major slices of H*W.
template <typename S>
Var<S> similarity_patterns(const Var<S>& query_lds, const Var<S>& support_lds, Index height, Index width,
                           Index shots, const EncoderConfig& config);

/// Image-to-class scores 1'p per class: [Q x N*K*H*W] to [Q x N].
template <typename S>
Var<S> class_scores(const Var<S>& patterns, Index ways);

/// Mean negative log-softmax of the true class. Labels are 0-based.
template <typename S>
Var<S> cls_loss(const Var<S>& scores, std::span<const Index> labels);

/// Index of the largest value, lowest index on ties.
template <typename S>
Index argmax(std::span<const S> values);

/// Row-wise argmax of a [Q x N] score matrix.
template <typename S>
std::vector<Index> predict(const Tensor<S>& scores);

/// Support-side state for classifying query feature maps.
template <typename S>
class SupportContext {
public:
    /// support_maps [N*K,h,w,C], class-major.
    SupportContext(Tensor<S> support_maps, Index ways, Index shots, EncoderConfig config = {});

    Tensor<S> scores(const Tensor<S>& query_maps) const;
    Index classify(const Tensor<S>& query_map) const;

    Index ways() const { return ways_; }
    Index shots() const { return shots_; }

private:
    Tensor<S> support_maps_;
    Index ways_, shots_;
    EncoderConfig config_;
};

extern template class SupportContext<float>;
extern template class SupportContext<double>;

}  // namespace fsuda

#endif  // FSUDA_SIMPATTERN_HPP
