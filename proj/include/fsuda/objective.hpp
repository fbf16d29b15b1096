#ifndef FSUDA_OBJECTIVE_HPP
#define FSUDA_OBJECTIVE_HPP

#include "fsuda/alignment.hpp"
#include "fsuda/embedding.hpp"
#include "fsuda/episode.hpp"
#include "fsuda/simpattern.hpp"

#include <optional>
#include <vector>

namespace fsuda {

struct ObjectiveConfig {
    LossWeights weights;
    EncoderConfig encoder;
    MsmConfig msm;
    std::vector<Index> scales{5, 2, 1};
    AdversarialMode adv_mode = AdversarialMode::kReversal;
};

/// Terms of one episode on one tape. A term with zero weight is not built.
template <typename S>
struct ObjectiveTerms {
    Var<S> total;
    Var<S> cls;
    std::optional<Var<S>> spa, adv, msm;
};

/// Episode images already embedded, split by role.
template <typename S>
struct EpisodeMaps {
    Var<S> support;
    Var<S> source_queries;
    Var<S> target_queries;
};

/// Embeds support, source queries and target queries as one batch.
template <typename S>
EpisodeMaps<S> embed_episode(Tape<S>& tape, const Episode& episode, const Dataset& dataset, Embedding<S>& net);

/// L_cls + w.spa L_spa + w.adv L_adv + w.msm L_msm built in that order.
/// Target labels are never read.
template <typename S>
ObjectiveTerms<S> total_objective(Tape<S>& tape, const EpisodeMaps<S>& maps, const Episode& episode,
                                  Discriminator<S>& disc, const ObjectiveConfig& config);

template <typename S>
ObjectiveTerms<S> total_objective(Tape<S>& tape, const Episode& episode, const Dataset& dataset, Embedding<S>& net,
                                  Discriminator<S>& disc, const ObjectiveConfig& config);

}  // namespace fsuda

#endif  // FSUDA_OBJECTIVE_HPP
