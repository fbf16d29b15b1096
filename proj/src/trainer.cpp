#include "fsuda/trainer.hpp"

#include "fsuda/checkpoint.hpp"
#include "fsuda/evaluate.hpp"
#include "fsuda/ops.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>

namespace fsuda {

void TrainConfig::validate() const {
    if (episodes < 1) throw std::invalid_argument("train: episode count must be at least 1");
    if (!(lr > 0) || !std::isfinite(lr)) throw std::invalid_argument("train: learning rate must be positive");
    if (halve_every < 1) throw std::invalid_argument("train: halving interval must be positive");
    if (checkpoint_every < 0) throw std::invalid_argument("train: checkpoint cadence must be >= 0");
    if (checkpoint_every > 0 && checkpoint_dir.empty())
        throw std::invalid_argument("train: checkpoint cadence set without a checkpoint directory");
    if (select_best_val && (val_every < 1 || val_tasks < 1))
        throw std::invalid_argument("train: validation cadence and task count must be positive");
    episode.validate();
    objective.weights.validate();
    embedding.validate();
}

std::string EpisodeMetrics::to_json_line(const std::string& fingerprint) const {
    nlohmann::ordered_json j;
    j["episode"] = episode;
    j["l_cls"] = l_cls;
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
    j["l_spa"] = opt(l_spa);
    j["l_adv"] = opt(l_adv);
    j["l_msm"] = opt(l_msm);
    j["total"] = total;
    j["lr"] = lr;
    j["wall_ms"] = wall_ms;
    if (!fingerprint.empty()) j["fingerprint"] = fingerprint;
    return j.dump();
}

DivergenceError::DivergenceError(long ep, std::uint64_t s)
    : std::runtime_error("non-finite loss at episode " + std::to_string(ep) + " (episode seed " + std::to_string(s) +
                         ")"),
      episode(ep),
      seed(s) {}

std::uint64_t episode_seed(std::uint64_t run_seed, long episode) {
    return derive_seed({run_seed, 0xe915ULL, static_cast<std::uint64_t>(episode)});
}

template <typename S>
TrainedModel<S> initial_model(const TrainConfig& config) {
    EmbeddingConfig ec = config.embedding;
    ec.seed = derive_seed({config.seed, 0xF0ULL});
    TrainedModel<S> m;
    m.net = std::make_unique<Embedding<S>>(ec);
    m.disc = std::make_unique<Discriminator<S>>(ec.channels, derive_seed({config.seed, 0xD0ULL}));
    return m;
}

namespace {

template <typename S>
void run_pretraining(Embedding<S>& net, const Dataset& dataset, const TrainConfig& config) {
    const auto& classes = dataset.classes(Split::kTrain);
    std::vector<ImageRef> refs;
    std::vector<Index> labels;
    for (std::size_t c = 0; c < classes.size(); ++c)
        for (Index s = 0; s < dataset.samples(classes[c], Domain::kSource); ++s) {
            refs.push_back({classes[c], s, Domain::kSource});
            labels.push_back(static_cast<Index>(c));
        }
    PretrainConfig pc = config.pretrain_config;
    pc.seed = derive_seed({config.seed, 0x9e7ULL});
    pretrain(net, dataset.gather<S>(std::span<const ImageRef>(refs)), labels, static_cast<Index>(classes.size()), pc);
}

template <typename S>
std::vector<Tensor<S>> snapshot(const ParameterSet<S>& params) {
    std::vector<Tensor<S>> out;
    for (const auto& p : params) out.push_back(p.value);
    return out;
}

template <typename S>
void restore(ParameterSet<S>& params, const std::vector<Tensor<S>>& values) {
    std::size_t i = 0;
    for (auto& p : params) p.value = values[i++];
}

template <typename S>
void negate_grads(ParameterSet<S>& params) {
    for (auto& p : params) p.grad.values() = -p.grad.values();
}

}  // namespace

template <typename S>
void train_model(TrainedModel<S>& model, const Dataset& dataset, const TrainConfig& config, const MetricsSink& sink) {
    config.validate();
    if (dataset.channels() != config.embedding.in_channels || dataset.height() != config.embedding.in_height ||
        dataset.width() != config.embedding.in_width)
        throw std::invalid_argument("train: dataset images do not match the embedding input extents");
    Embedding<S>& net = *model.net;
    Discriminator<S>& disc = *model.disc;
    if (config.pretrain) run_pretraining(net, dataset, config);

    Adam<S> shared({&net.parameters(), &disc.parameters()}, config.adam);
    Adam<S> f_only({&net.parameters()}, config.adam);
    Adam<S> d_only({&disc.parameters()}, config.adam);

    ObjectiveConfig objective = config.objective;
    if (config.alternating) objective.adv_mode = AdversarialMode::kPlain;

    std::vector<Tensor<S>> best_net, best_disc;
    auto validate_now = [&](long episode) {
        EvalConfig ec;
        ec.episode = config.episode;
        ec.tasks = config.val_tasks;
        ec.split = Split::kVal;
        ec.seed = derive_seed({config.seed, 0x7a1ULL});
        ec.encoder = config.objective.encoder;
        const EvalReport r = evaluate(dataset, net, ec, dataset.classes(Split::kTrain));
        if (r.mean > model.best_val_accuracy) {
            model.best_val_accuracy = r.mean;
            model.best_episode = episode;
            best_net = snapshot(net.parameters());
            best_disc = snapshot(disc.parameters());
        }
    };

    Tape<S> tape;
    for (long ep = 0; ep < config.episodes; ++ep) {
        const auto start = std::chrono::steady_clock::now();
        const std::uint64_t seed = episode_seed(config.seed, ep);
        Rng rng(seed);
        const Episode episode = sample_episode(dataset, Split::kTrain, config.episode, rng, EpisodeMode::kTrain);
        const double lr = step_decay_rate(config.lr, ep, config.halve_every);

        tape.reset();
        net.parameters().zero_grad();
        disc.parameters().zero_grad();
        const ObjectiveTerms<S> terms = total_objective(tape, episode, dataset, net, disc, objective);
        if (!std::isfinite(static_cast<double>(terms.total.item()))) throw DivergenceError(ep, seed);

        EpisodeMetrics metrics;
        metrics.episode = ep;
        metrics.seed = seed;
        metrics.l_cls = static_cast<double>(terms.cls.item());
        if (terms.spa) metrics.l_spa = static_cast<double>(terms.spa->item());
        if (terms.adv) metrics.l_adv = static_cast<double>(terms.adv->item());
        if (terms.msm) metrics.l_msm = static_cast<double>(terms.msm->item());
        metrics.total = static_cast<double>(terms.total.item());
        metrics.lr = lr;

        tape.backward(terms.total);
        if (!config.alternating) {
            shared.step(lr);
        } else {
            // F descends the full objective with D held fixed.
            f_only.step(lr);
            if (terms.adv) {
                // D ascends the adversarial term against the updated F.
                tape.reset();
                net.parameters().zero_grad();
                disc.parameters().zero_grad();
                const EpisodeMaps<S> maps = embed_episode(tape, episode, dataset, net);
                const Var<S> adv = adv_loss(tape, extract_lds(maps.source_queries), extract_lds(maps.target_queries),
                                            disc, AdversarialMode::kPlain);
                tape.backward(adv);
                negate_grads(disc.parameters());
                d_only.step(lr);
            }
        }
        tape.reset();

        metrics.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (sink) sink(metrics);

        const long done = ep + 1;
        if (config.checkpoint_every > 0 && done % config.checkpoint_every == 0) {
            char name[64];
            std::snprintf(name, sizeof name, "episode_%06ld.ckpt", done);
            std::filesystem::create_directories(config.checkpoint_dir);
            save_checkpoint<S>((std::filesystem::path(config.checkpoint_dir) / name).string(),
                               {&net.parameters(), &disc.parameters()});
        }
        if (config.select_best_val && (done % config.val_every == 0 || done == config.episodes)) validate_now(done);
    }
    if (config.select_best_val && !best_net.empty()) {
        restore(net.parameters(), best_net);
        restore(disc.parameters(), best_disc);
    }
}

template <typename S>
TrainedModel<S> train(const Dataset& dataset, const TrainConfig& config, const MetricsSink& sink) {
    config.validate();
    TrainedModel<S> model = initial_model<S>(config);
    train_model(model, dataset, config, sink);
    return model;
}

#define FSUDA_INSTANTIATE_TRAINER(S)                                                                  \
    template TrainedModel<S> initial_model<S>(const TrainConfig&);                                    \
    template TrainedModel<S> train<S>(const Dataset&, const TrainConfig&, const MetricsSink&);        \
    template void train_model<S>(TrainedModel<S>&, const Dataset&, const TrainConfig&, const MetricsSink&);

FSUDA_INSTANTIATE_TRAINER(float)
FSUDA_INSTANTIATE_TRAINER(double)

}  // namespace fsuda
