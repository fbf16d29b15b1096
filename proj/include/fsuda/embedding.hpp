#ifndef FSUDA_EMBEDDING_HPP
#define FSUDA_EMBEDDING_HPP

#include "fsuda/autodiff.hpp"

#include <cstdint>
#include <vector>

namespace fsuda {

/// Shape of the convolutional embedding. Block 0 uses same padding, later
/// blocks are unpadded; every block except the last ends in a 2x2/2 ceil-mode
/// max-pool. The default maps 32x32x1 to a 5x5x32 feature map.
struct EmbeddingConfig {
    Index in_height = 32;
    Index in_width = 32;
    Index in_channels = 1;
    Index blocks = 3;
    Index channels = 32;
    std::uint64_t seed = 1;

    Index out_height() const;
    Index out_width() const;
    /// Throws unless the output plane is at least 3x3 and channels >= 4.
    void validate() const;
};

struct BlockLayout {
    Index padding;
    bool pool;
};

BlockLayout block_layout(const EmbeddingConfig& config, Index block);

/// Feature embedding network: per block 3x3 conv, learnable per-channel
/// scale and bias, ReLU, optional max-pool.
template <typename S>
class Embedding {
public:
    explicit Embedding(const EmbeddingConfig& config);

    /// images [B,H,W,Cin] (or a single [H,W,Cin]) to feature maps [B,h,w,C].
    Var<S> forward(Tape<S>& tape, const Var<S>& images);
    Var<S> forward(Tape<S>& tape, const Tensor<S>& images) { return forward(tape, tape.constant(images)); }

    ParameterSet<S>& parameters() { return params_; }
    const ParameterSet<S>& parameters() const { return params_; }
    const EmbeddingConfig& config() const { return config_; }

private:
    EmbeddingConfig config_;
    ParameterSet<S> params_;
};

/// Position of a local-descriptor row in the maps it was gathered from.
struct LdPosition {
    Index image, y, x;
};

inline LdPosition ld_position(Index row, Index height, Index width) {
    return {row / (height * width), (row / width) % height, row % width};
}

inline Index ld_row(const LdPosition& p, Index height, Index width) {
    return (p.image * height + p.y) * width + p.x;
}

/// Local descriptors of [B,h,w,C] (or [h,w,C]) maps as a [B*h*w, C] matrix in
/// image-major raster order.
template <typename S>
Var<S> extract_lds(const Var<S>& maps);

/// Adaptive average pooling of every support map to each grid in `scales`
/// (default 5x5, 2x2, 1x1), gathered image-major: per image the 5x5 cells in
/// raster order, then 2x2, then 1x1. Rejects maps smaller than the largest grid.
template <typename S>
Var<S> multiscale_lds(const Var<S>& support_maps, const std::vector<Index>& scales = {5, 2, 1});

struct PretrainConfig {
    Index epochs = 10;
    Index batch = 64;
    double lr = 1e-3;
    std::uint64_t seed = 1;
};

/// Trains `net` plus a temporary global-average-pool + linear head with
/// cross-entropy on labeled images [n,H,W,Cin]; the head is discarded.
/// Returns the mean loss of each epoch.
template <typename S>
std::vector<double> pretrain(Embedding<S>& net, const Tensor<S>& images, const std::vector<Index>& labels,
                             Index classes, const PretrainConfig& config);

extern template class Embedding<float>;
extern template class Embedding<double>;

}  // namespace fsuda

#endif  // FSUDA_EMBEDDING_HPP
