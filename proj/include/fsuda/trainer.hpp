#ifndef FSUDA_TRAINER_HPP
#define FSUDA_TRAINER_HPP

#include "fsuda/adam.hpp"
#include "fsuda/objective.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsuda {

struct TrainConfig {
    EpisodeSpec episode;
    long episodes = 2000;
    double lr = 1e-4;
    long halve_every = 1000;
    AdamConfig adam;
    ObjectiveConfig objective;
    EmbeddingConfig embedding;
    std::uint64_t seed = 1;
    bool pretrain = false;
    PretrainConfig pretrain_config;
    /// Separate F and D steps per episode instead of one reversed step.
    bool alternating = false;
    /// Keep the checkpoint with the best validation accuracy.
    bool select_best_val = false;
    long val_every = 500;
    Index val_tasks = 100;
    /// Zero disables periodic checkpoints.
    long checkpoint_every = 0;
    std::string checkpoint_dir;
    /// Config fingerprint stamped into metrics records.
    std::string fingerprint;

    void validate() const;
};

struct EpisodeMetrics {
    long episode = 0;
    std::uint64_t seed = 0;
    double l_cls = 0;
    std::optional<double> l_spa, l_adv, l_msm;
    double total = 0;
    double lr = 0;
    double wall_ms = 0;

    std::string to_json_line(const std::string& fingerprint = {}) const;
};

/// Raised when the objective becomes non-finite.
struct DivergenceError : std::runtime_error {
    DivergenceError(long episode, std::uint64_t seed);
    long episode;
    std::uint64_t seed;
};

template <typename S>
struct TrainedModel {
    std::unique_ptr<Embedding<S>> net;
    std::unique_ptr<Discriminator<S>> disc;
    long best_episode = -1;
    double best_val_accuracy = -1;
};

/// Fresh F and D seeded from `config.seed`.
template <typename S>
TrainedModel<S> initial_model(const TrainConfig& config);

using MetricsSink = std::function<void(const EpisodeMetrics&)>;

/// Episodic training on the train split. Deterministic given the config.
template <typename S>
TrainedModel<S> train(const Dataset& dataset, const TrainConfig& config, const MetricsSink& sink = {});

/// Runs `train` on an existing model.
template <typename S>
void train_model(TrainedModel<S>& model, const Dataset& dataset, const TrainConfig& config,
                 const MetricsSink& sink = {});

/// Seed of the episode sampler for one episode.
std::uint64_t episode_seed(std::uint64_t run_seed, long episode);

}  // namespace fsuda

#endif  // FSUDA_TRAINER_HPP
