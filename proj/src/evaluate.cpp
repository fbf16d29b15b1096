#include "fsuda/evaluate.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

namespace fsuda {

std::uint64_t task_seed(std::uint64_t eval_seed, Index task) {
    return derive_seed({eval_seed, 0x7e57ULL, static_cast<std::uint64_t>(task)});
}

EvalReport summarize(std::vector<double> accuracies) {
    EvalReport r;
    r.tasks = static_cast<Index>(accuracies.size());
    if (r.tasks == 0) throw std::invalid_argument("summarize: no tasks");
    const double n = static_cast<double>(r.tasks);
    r.mean = std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / n;
    if (r.tasks > 1) {
        double ss = 0;
        for (double a : accuracies) ss += (a - r.mean) * (a - r.mean);
        r.ci95 = 1.96 * std::sqrt(ss / (n - 1)) / std::sqrt(n);
    }
    r.accuracies = std::move(accuracies);
    return r;
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["fingerprint"] = fingerprint;
    j["split"] = split;
    j["tasks"] = tasks;
    j["mean_accuracy"] = mean;
    j["ci95"] = ci95;
    j["accuracies"] = accuracies;
    return j.dump(2) + "\n";
}

template <typename S>
EvalReport evaluate(const Dataset& dataset, Embedding<S>& net, const EvalConfig& config,
                    const std::vector<Index>& trained_on) {
    if (config.tasks < 1) throw std::invalid_argument("evaluate: task count must be positive");
    const std::set<Index> seen(trained_on.begin(), trained_on.end());
    for (Index c : dataset.classes(config.split))
        if (seen.count(c))
            throw std::invalid_argument(std::string("evaluate: class ") + std::to_string(c) + " of the " +
                                        split_name(config.split) + " split was used in training");

    std::vector<double> accuracies(static_cast<std::size_t>(config.tasks));
    std::atomic<Index> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        try {
            for (Index task = next++; task < config.tasks; task = next++) {
                Rng rng(task_seed(config.seed, task));
                const Episode ep = sample_episode(dataset, config.split, config.episode, rng, EpisodeMode::kTest);
                Tape<S> tape(false);
                const Tensor<S> support_maps =
                    net.forward(tape, dataset.gather<S>(std::span<const ImageRef>(ep.support))).value();
                const Tensor<S> query_maps =
                    net.forward(tape, dataset.gather<S>(std::span<const TargetRef>(ep.target_queries))).value();
                const SupportContext<S> context(support_maps, ep.ways, ep.shots, config.encoder);
                const std::vector<Index> predicted = predict(context.scores(query_maps));
                Index correct = 0;
                for (std::size_t i = 0; i < predicted.size(); ++i)
                    if (predicted[i] == ep.target_labels.at(i)) ++correct;
                accuracies[static_cast<std::size_t>(task)] =
                    100.0 * static_cast<double>(correct) / static_cast<double>(predicted.size());
            }
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = config.tasks;
        }
    };
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned threads = std::min<unsigned>(config.threads ? config.threads : hw,
                                                static_cast<unsigned>(std::min<Index>(config.tasks, 64)));
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
        worker();
    }
    if (failure) std::rethrow_exception(failure);

    EvalReport report = summarize(std::move(accuracies));
    report.split = split_name(config.split);
    report.fingerprint = config.fingerprint;
    return report;
}

template EvalReport evaluate(const Dataset&, Embedding<float>&, const EvalConfig&, const std::vector<Index>&);
template EvalReport evaluate(const Dataset&, Embedding<double>&, const EvalConfig&, const std::vector<Index>&);

}  // namespace fsuda
