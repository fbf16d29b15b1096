#ifndef FSUDA_EPISODE_HPP
#define FSUDA_EPISODE_HPP

#include "fsuda/dataset.hpp"
#include "fsuda/random.hpp"

#include <atomic>
#include <cstdint>
#include <vector>

namespace fsuda {

struct EpisodeSpec {
    Index ways = 5;
    Index shots = 1;
    Index queries = 15;
    /// Target query count; negative means ways * queries.
    Index target_queries = -1;

    Index target_count() const { return target_queries < 0 ? ways * queries : target_queries; }
    void validate() const;
};

enum class EpisodeMode {
    /// Target queries drawn from every class of the split.
    kTrain,
    /// Target queries drawn from the episode's classes, balanced per class.
    kTest,
};

/// Target-query labels that count every read. Episode-local class index in
/// test mode, -1 for targets outside the episode's classes.
class TrackedLabels {
public:
    TrackedLabels() = default;
    explicit TrackedLabels(std::vector<Index> labels) : labels_(std::move(labels)) {}

    Index at(std::size_t i) const;
    std::size_t size() const { return labels_.size(); }
    std::uint64_t reads() const { return reads_; }

    /// Reads across every instance since the last reset.
    static std::uint64_t total_reads();
    static void reset_total_reads();

    bool operator==(const TrackedLabels& o) const { return labels_ == o.labels_; }

private:
    std::vector<Index> labels_;
    mutable std::uint64_t reads_ = 0;
};

struct Episode {
    Index ways = 0, shots = 0;
    /// Dataset class of each episode-local label.
    std::vector<Index> classes;
    /// Class-major: shots images of class 0, then class 1, ...
    std::vector<ImageRef> support;
    std::vector<Index> support_labels;
    std::vector<ImageRef> source_queries;
    std::vector<Index> source_query_labels;
    std::vector<TargetRef> target_queries;
    TrackedLabels target_labels;

    bool operator==(const Episode&) const = default;
};

/// Draws classes without replacement from `split`, then disjoint support and
/// query samples per class. Throws if the split has fewer than `ways` classes
/// or a class has fewer than shots + queries samples.
Episode sample_episode(const Dataset& dataset, Split split, const EpisodeSpec& spec, Rng& rng, EpisodeMode mode);

/// First `count` entries of a uniform random permutation of 0..n-1.
std::vector<Index> sample_without_replacement(Rng& rng, Index n, Index count);

}  // namespace fsuda

#endif  // FSUDA_EPISODE_HPP
