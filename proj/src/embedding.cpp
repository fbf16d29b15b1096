#include "fsuda/embedding.hpp"

#include "fsuda/adam.hpp"
#include "fsuda/ops.hpp"
#include "fsuda/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fsuda {

namespace {

constexpr Index kKernel = 3;
const PoolGeometry kBlockPool{2, 2, true};

Index trace_extent(const EmbeddingConfig& c, Index in) {
    Index e = in;
    for (Index b = 0; b < c.blocks; ++b) {
        const BlockLayout l = block_layout(c, b);
        e = e + 2 * l.padding - kKernel + 1;
        if (e < 1) return 0;
        if (l.pool) e = pooled_extent(e, kBlockPool);
    }
    return e;
}

}  // namespace

BlockLayout block_layout(const EmbeddingConfig& config, Index block) {
    return {block == 0 ? Index(1) : Index(0), block + 1 < config.blocks};
}

Index EmbeddingConfig::out_height() const { return trace_extent(*this, in_height); }
Index EmbeddingConfig::out_width() const { return trace_extent(*this, in_width); }

void EmbeddingConfig::validate() const {
    if (blocks < 1) throw std::invalid_argument("embedding needs at least one block");
    if (in_channels < 1) throw std::invalid_argument("embedding needs at least one input channel");
    if (channels < 4) throw std::invalid_argument("embedding channels must be at least 4");
    if (out_height() < 3 || out_width() < 3)
        throw std::invalid_argument("embedding output plane " + std::to_string(out_height()) + "x" +
                                    std::to_string(out_width()) + " is smaller than 3x3");
}

template <typename S>
Embedding<S>::Embedding(const EmbeddingConfig& config) : config_(config) {
    config_.validate();
    Rng rng(derive_seed({config.seed, 0xE3BEDu}));
    Index cin = config.in_channels;
    for (Index b = 0; b < config.blocks; ++b) {
        const std::string prefix = "embed.block" + std::to_string(b);
        Tensor<S> w({kKernel, kKernel, cin, config.channels});
        const double std_dev = std::sqrt(2.0 / static_cast<double>(kKernel * kKernel * cin));
        for (Index i = 0; i < w.size(); ++i) w[i] = static_cast<S>(std_dev * standard_normal(rng));
        params_.add(prefix + ".weight", std::move(w));
        params_.add(prefix + ".scale", Tensor<S>::constant({config.channels}, S(1)));
        params_.add(prefix + ".bias", Tensor<S>({config.channels}));
        cin = config.channels;
    }
}

template <typename S>
Var<S> Embedding<S>::forward(Tape<S>& tape, const Var<S>& images) {
    const Tensor<S>& v = images.value();
    const Index r = v.rank();
    if ((r != 3 && r != 4) || v.extent(r - 3) != config_.in_height || v.extent(r - 2) != config_.in_width ||
        v.extent(r - 1) != config_.in_channels)
        throw std::invalid_argument("embed: image " + shape_string(v.shape()) + " does not match configured " +
                                    std::to_string(config_.in_height) + "x" + std::to_string(config_.in_width) + "x" +
                                    std::to_string(config_.in_channels));
    Var<S> x = r == 3 ? reshape(images, {1, v.extent(0), v.extent(1), v.extent(2)}) : images;
    for (Index b = 0; b < config_.blocks; ++b) {
        const BlockLayout layout = block_layout(config_, b);
        const auto i = static_cast<std::size_t>(3 * b);
        x = conv2d(x, tape.param(params_[i]), 1, layout.padding);
        x = add_channelwise(mul_channelwise(x, tape.param(params_[i + 1])), tape.param(params_[i + 2]));
        x = relu(x);
        if (layout.pool) x = pool2d(x, PoolMode::kMax, kBlockPool);
    }
    return x;
}

template <typename S>
Var<S> extract_lds(const Var<S>& maps) {
    const Shape& s = maps.shape();
    if (s.size() != 3 && s.size() != 4)
        throw std::invalid_argument("extract_lds: expected feature maps, got " + shape_string(s));
    const Index c = s.back();
    return reshape(maps, {maps.size() / c, c});
}

template <typename S>
Var<S> multiscale_lds(const Var<S>& support_maps, const std::vector<Index>& scales) {
    const Shape& s = support_maps.shape();
    if (s.size() != 4) throw std::invalid_argument("multiscale_lds: expected [B,h,w,C], got " + shape_string(s));
    if (scales.empty()) throw std::invalid_argument("multiscale_lds: no scales");
    const Index largest = *std::max_element(scales.begin(), scales.end());
    if (s[1] < largest || s[2] < largest)
        throw std::invalid_argument("multiscale_lds: map " + shape_string(s) + " smaller than the " +
                                    std::to_string(largest) + "x" + std::to_string(largest) + " grid");
    const Index c = s[3];
    std::vector<Var<S>> parts;
    for (Index b = 0; b < s[0]; ++b) {
        const Var<S> one = slice(support_maps, b, 1);
        for (Index g : scales) parts.push_back(reshape(adaptive_avg_pool2d(one, g, g), {g * g, c}));
    }
    return concat(parts);
}

template <typename S>
std::vector<double> pretrain(Embedding<S>& net, const Tensor<S>& images, const std::vector<Index>& labels,
                             Index classes, const PretrainConfig& config) {
    if (classes < 2) throw std::invalid_argument("pretrain needs at least 2 classes");
    const Index n = images.extent(0);
    if (static_cast<Index>(labels.size()) != n) throw std::invalid_argument("pretrain: label count mismatch");
    for (Index l : labels)
        if (l < 0 || l >= classes) throw std::invalid_argument("pretrain: label out of range");

    const Index c = net.config().channels;
    ParameterSet<S> head;
    {
        Rng rng(derive_seed({config.seed, 0x4EADu}));
        Tensor<S> w({c, classes});
        const double std_dev = std::sqrt(1.0 / static_cast<double>(c));
        for (Index i = 0; i < w.size(); ++i) w[i] = static_cast<S>(std_dev * standard_normal(rng));
        head.add("head.weight", std::move(w));
        head.add("head.bias", Tensor<S>({classes}));
    }
    Adam<S> adam({&net.parameters(), &head});
    Rng rng(derive_seed({config.seed, 0x5EEDu}));
    std::vector<Index> order(static_cast<std::size_t>(n));
    const Index stride = images.size() / n;
    std::vector<double> epoch_loss;

    for (Index e = 0; e < config.epochs; ++e) {
        std::iota(order.begin(), order.end(), Index(0));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
        double total = 0;
        Index batches = 0;
        for (Index begin = 0; begin < n; begin += config.batch) {
            const Index count = std::min(config.batch, n - begin);
            Shape shape = images.shape();
            shape[0] = count;
            Tensor<S> batch(shape);
            Matrix<Index> target(count, 1);
            for (Index j = 0; j < count; ++j) {
                const Index src = order[static_cast<std::size_t>(begin + j)];
                batch.values().segment(j * stride, stride) = images.values().segment(src * stride, stride);
                target(j, 0) = labels[static_cast<std::size_t>(src)];
            }
            Tape<S> tape;
            net.parameters().zero_grad();
            head.zero_grad();
            const Var<S> maps = net.forward(tape, batch);
            const Var<S> pooled = reshape(adaptive_avg_pool2d(maps, 1, 1), {count, c});
            const Var<S> logits = add_channelwise(matmul(pooled, tape.param(head[0])), tape.param(head[1]));
            const Var<S> loss = -mean(gather_cols(log_softmax_rows(logits), target));
            tape.backward(loss);
            adam.step(config.lr);
            total += static_cast<double>(loss.item());
            ++batches;
        }
        epoch_loss.push_back(total / static_cast<double>(batches));
    }
    return epoch_loss;
}

template class Embedding<float>;
template class Embedding<double>;

template Var<float> extract_lds(const Var<float>&);
template Var<double> extract_lds(const Var<double>&);
template Var<float> multiscale_lds(const Var<float>&, const std::vector<Index>&);
template Var<double> multiscale_lds(const Var<double>&, const std::vector<Index>&);
template std::vector<double> pretrain(Embedding<float>&, const Tensor<float>&, const std::vector<Index>&, Index,
                                      const PretrainConfig&);
template std::vector<double> pretrain(Embedding<double>&, const Tensor<double>&, const std::vector<Index>&, Index,
                                      const PretrainConfig&);

}  // namespace fsuda
