#ifndef FSUDA_EVALUATE_HPP
#define FSUDA_EVALUATE_HPP

#include "fsuda/embedding.hpp"
#include "fsuda/episode.hpp"
#include "fsuda/simpattern.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fsuda {

struct EvalConfig {
    EpisodeSpec episode;
    Index tasks = 300;
    Split split = Split::kTest;
    std::uint64_t seed = 1;
    EncoderConfig encoder;
    /// Worker threads; 0 picks the hardware concurrency.
    unsigned threads = 0;
    std::string fingerprint;
};

struct EvalReport {
    /// Top-1 accuracy of each task in percent, in task order.
    std::vector<double> accuracies;
    double mean = 0;
    /// 1.96 * sample standard deviation / sqrt(tasks); 0 for a single task.
    double ci95 = 0;
    Index tasks = 0;
    std::string split;
    std::string fingerprint;

    std::string to_json() const;
};

/// Mean and 95% half-width of per-task accuracies.
EvalReport summarize(std::vector<double> accuracies);

/// Classifies every target query of `config.tasks` test-mode episodes.
/// Rejects a split that shares classes with `trained_on`.
template <typename S>
EvalReport evaluate(const Dataset& dataset, Embedding<S>& net, const EvalConfig& config,
                    const std::vector<Index>& trained_on);

std::uint64_t task_seed(std::uint64_t eval_seed, Index task);

}  // namespace fsuda

#endif  // FSUDA_EVALUATE_HPP
