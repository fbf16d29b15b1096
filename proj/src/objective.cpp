#include "fsuda/objective.hpp"

#include "fsuda/ops.hpp"

#include <stdexcept>

namespace fsuda {

template <typename S>
EpisodeMaps<S> embed_episode(Tape<S>& tape, const Episode& episode, const Dataset& dataset, Embedding<S>& net) {
    const Index ns = static_cast<Index>(episode.support.size());
    const Index nq = static_cast<Index>(episode.source_queries.size());
    const Index nt = static_cast<Index>(episode.target_queries.size());
    const Tensor<S> support = dataset.gather<S>(std::span<const ImageRef>(episode.support));
    const Tensor<S> queries = dataset.gather<S>(std::span<const ImageRef>(episode.source_queries));
    const Tensor<S> targets = dataset.gather<S>(std::span<const TargetRef>(episode.target_queries));

    Shape shape = support.shape();
    shape[0] = ns + nq + nt;
    Tensor<S> batch(shape);
    const Index stride = support.size() / ns;
    batch.values().segment(0, ns * stride) = support.values();
    batch.values().segment(ns * stride, nq * stride) = queries.values();
    batch.values().segment((ns + nq) * stride, nt * stride) = targets.values();

    const Var<S> maps = net.forward(tape, batch);
    return {slice(maps, 0, ns), slice(maps, ns, nq), slice(maps, ns + nq, nt)};
}

template <typename S>
ObjectiveTerms<S> total_objective(Tape<S>& tape, const EpisodeMaps<S>& maps, const Episode& episode,
                                  Discriminator<S>& disc, const ObjectiveConfig& config) {
    config.weights.validate();
    const Index ways = episode.ways, shots = episode.shots;
    const Index h = maps.support.extent(1), w = maps.support.extent(2), plane = h * w;
    const Index nq = maps.source_queries.extent(0), nt = maps.target_queries.extent(0);
    if (maps.support.extent(0) != ways * shots)
        throw std::invalid_argument("objective: support maps do not match ways x shots");

    const Var<S> support_lds = extract_lds(maps.support);
    const Var<S> source_lds = extract_lds(maps.source_queries);
    const Var<S> target_lds = extract_lds(maps.target_queries);
    const Var<S> patterns = similarity_patterns(concat(std::vector<Var<S>>{source_lds, target_lds}), support_lds, h,
                                                w, shots, config.encoder);
    const Var<S> source_patterns = slice(patterns, 0, nq);

    ObjectiveTerms<S> terms{Var<S>(), cls_loss(class_scores(source_patterns, ways),
                                               std::span<const Index>(episode.source_query_labels)),
                            std::nullopt, std::nullopt, std::nullopt};
    Var<S> total = terms.cls;

    if (config.weights.spa > 0) {
        const Var<S> target_patterns = slice(patterns, nq, nt);
        std::vector<Var<S>> source_sets, target_sets;
        for (Index i = 0; i < ways * shots; ++i) {
            source_sets.push_back(slice_cols(source_patterns, i * plane, plane));
            target_sets.push_back(slice_cols(target_patterns, i * plane, plane));
        }
        terms.spa = spa_loss(std::span<const Var<S>>(source_sets), std::span<const Var<S>>(target_sets));
        total = total + *terms.spa * static_cast<S>(config.weights.spa);
    }
    if (config.weights.adv > 0) {
        terms.adv = adv_loss(tape, source_lds, target_lds, disc, config.adv_mode);
        total = total + *terms.adv * static_cast<S>(config.weights.adv);
    }
    if (config.weights.msm > 0) {
        terms.msm = msm_loss(target_lds, multiscale_lds(maps.support, config.scales), nt, config.msm);
        total = total + *terms.msm * static_cast<S>(config.weights.msm);
    }
    terms.total = total;
    return terms;
}

template <typename S>
ObjectiveTerms<S> total_objective(Tape<S>& tape, const Episode& episode, const Dataset& dataset, Embedding<S>& net,
                                  Discriminator<S>& disc, const ObjectiveConfig& config) {
    return total_objective(tape, embed_episode(tape, episode, dataset, net), episode, disc, config);
}

#define FSUDA_INSTANTIATE_OBJECTIVE(S)                                                                          \
    template EpisodeMaps<S> embed_episode(Tape<S>&, const Episode&, const Dataset&, Embedding<S>&);             \
    template ObjectiveTerms<S> total_objective(Tape<S>&, const EpisodeMaps<S>&, const Episode&, Discriminator<S>&, \
                                               const ObjectiveConfig&);                                         \
    template ObjectiveTerms<S> total_objective(Tape<S>&, const Episode&, const Dataset&, Embedding<S>&,         \
                                               Discriminator<S>&, const ObjectiveConfig&);

FSUDA_INSTANTIATE_OBJECTIVE(float)
FSUDA_INSTANTIATE_OBJECTIVE(double)

}  // namespace fsuda
