#include "fsuda/episode.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

namespace fsuda {

namespace {
std::atomic<std::uint64_t> g_total_reads{0};
}

void EpisodeSpec::validate() const {
    if (ways < 2) throw std::invalid_argument("episode: ways must be at least 2, got " + std::to_string(ways));
    if (shots < 1) throw std::invalid_argument("episode: shots must be at least 1, got " + std::to_string(shots));
    if (queries < 1) throw std::invalid_argument("episode: queries must be at least 1, got " + std::to_string(queries));
    if (target_queries == 0 || target_queries < -1)
        throw std::invalid_argument("episode: target query count must be positive");
}

Index TrackedLabels::at(std::size_t i) const {
    ++reads_;
    g_total_reads.fetch_add(1, std::memory_order_relaxed);
    return labels_.at(i);
}

std::uint64_t TrackedLabels::total_reads() { return g_total_reads.load(); }
void TrackedLabels::reset_total_reads() { g_total_reads.store(0); }

std::vector<Index> sample_without_replacement(Rng& rng, Index n, Index count) {
    if (count < 0 || count > n)
        throw std::invalid_argument("cannot draw " + std::to_string(count) + " of " + std::to_string(n));
    std::vector<Index> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), Index(0));
    for (Index i = 0; i < count; ++i) {
        const auto j = i + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n - i)));
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    pool.resize(static_cast<std::size_t>(count));
    return pool;
}

Episode sample_episode(const Dataset& dataset, Split split, const EpisodeSpec& spec, Rng& rng, EpisodeMode mode) {
    spec.validate();
    const std::vector<Index>& pool = dataset.classes(split);
    const Index available = static_cast<Index>(pool.size());
    if (spec.ways > available)
        throw std::invalid_argument(std::string("episode: ") + std::to_string(spec.ways) + " ways but the " +
                                    split_name(split) + " split has " + std::to_string(available) + " classes");
    const Index per_class = spec.shots + spec.queries;

    Episode ep;
    ep.ways = spec.ways;
    ep.shots = spec.shots;
    for (Index pick : sample_without_replacement(rng, available, spec.ways))
        ep.classes.push_back(pool[static_cast<std::size_t>(pick)]);

    std::vector<std::vector<Index>> chosen;
    for (Index c = 0; c < spec.ways; ++c) {
        const Index cls = ep.classes[static_cast<std::size_t>(c)];
        const Index samples = dataset.samples(cls, Domain::kSource);
        if (samples < per_class)
            throw std::invalid_argument("episode: class " + std::to_string(cls) + " has " + std::to_string(samples) +
                                        " source samples, need " + std::to_string(per_class));
        chosen.push_back(sample_without_replacement(rng, samples, per_class));
    }
    for (Index c = 0; c < spec.ways; ++c) {
        const auto& picks = chosen[static_cast<std::size_t>(c)];
        const Index cls = ep.classes[static_cast<std::size_t>(c)];
        for (Index i = 0; i < spec.shots; ++i) {
            ep.support.push_back({cls, picks[static_cast<std::size_t>(i)], Domain::kSource});
            ep.support_labels.push_back(c);
        }
    }
    for (Index c = 0; c < spec.ways; ++c) {
        const auto& picks = chosen[static_cast<std::size_t>(c)];
        const Index cls = ep.classes[static_cast<std::size_t>(c)];
        for (Index i = spec.shots; i < per_class; ++i) {
            ep.source_queries.push_back({cls, picks[static_cast<std::size_t>(i)], Domain::kSource});
            ep.source_query_labels.push_back(c);
        }
    }

    const Index targets = spec.target_count();
    std::vector<Index> labels;
    if (mode == EpisodeMode::kTrain) {
        // Flat pool over (class, sample) of the whole split.
        std::vector<std::pair<Index, Index>> flat;
        for (Index cls : pool)
            for (Index s = 0; s < dataset.samples(cls, Domain::kTarget); ++s) flat.emplace_back(cls, s);
        if (targets > static_cast<Index>(flat.size()))
            throw std::invalid_argument("episode: " + std::to_string(targets) + " target queries exceed the split's " +
                                        std::to_string(flat.size()) + " target images");
        for (Index pick : sample_without_replacement(rng, static_cast<Index>(flat.size()), targets)) {
            const auto [cls, s] = flat[static_cast<std::size_t>(pick)];
            ep.target_queries.push_back(Dataset::target_ref(cls, s));
            Index local = -1;
            for (Index c = 0; c < spec.ways; ++c)
                if (ep.classes[static_cast<std::size_t>(c)] == cls) local = c;
            labels.push_back(local);
        }
    } else {
        for (Index c = 0; c < spec.ways; ++c) {
            const Index cls = ep.classes[static_cast<std::size_t>(c)];
            const Index want = targets / spec.ways + (c < targets % spec.ways ? 1 : 0);
            const Index samples = dataset.samples(cls, Domain::kTarget);
            if (want > samples)
                throw std::invalid_argument("episode: class " + std::to_string(cls) + " has " +
                                            std::to_string(samples) + " target samples, need " + std::to_string(want));
            for (Index s : sample_without_replacement(rng, samples, want)) {
                ep.target_queries.push_back(Dataset::target_ref(cls, s));
                labels.push_back(c);
            }
        }
    }
    ep.target_labels = TrackedLabels(std::move(labels));
    return ep;
}

}  // namespace fsuda
