#include "fsuda/checkpoint.hpp"
#include "fsuda/evaluate.hpp"
#include "fsuda/objective.hpp"
#include "fsuda/synthetic.hpp"
#include "fsuda/trainer.hpp"
#include "fsuda/verify.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace fsuda {
namespace {

using T = Tensor<double>;

TrainConfig micro_train_config(std::uint64_t seed, long episodes) {
    TrainConfig c;
    c.episode = micro_episode_spec();
    c.episodes = episodes;
    c.objective = micro_objective_config();
    c.objective.adv_mode = AdversarialMode::kReversal;
    c.embedding = micro_embedding_config(seed);
    c.seed = seed;
    return c;
}

Dataset ten_class_dataset() {
    SyntheticSpec s = micro_dataset_spec(3);
    s.train_classes = 10;
    return generate_synthetic(s);
}

TEST(EpisodeSpec, Validation) {
    EXPECT_NO_THROW(EpisodeSpec{}.validate());
    EXPECT_EQ(EpisodeSpec{}.target_count(), 75);
    EXPECT_THROW((EpisodeSpec{1, 1, 15, -1}.validate()), std::invalid_argument);
    EXPECT_THROW((EpisodeSpec{5, 0, 15, -1}.validate()), std::invalid_argument);
    EXPECT_THROW((EpisodeSpec{5, 1, 0, -1}.validate()), std::invalid_argument);
}

TEST(SampleEpisode, Composition) {
    const Dataset ds = ten_class_dataset();
    const EpisodeSpec spec{4, 2, 3, 9};
    Rng rng(41);
    for (int i = 0; i < 50; ++i) {
        const Episode ep = sample_episode(ds, Split::kTrain, spec, rng, EpisodeMode::kTrain);
        ASSERT_EQ(ep.classes.size(), 4u);
        EXPECT_EQ(std::set<Index>(ep.classes.begin(), ep.classes.end()).size(), 4u);
        ASSERT_EQ(ep.support.size(), 8u);
        ASSERT_EQ(ep.source_queries.size(), 12u);
        EXPECT_EQ(ep.target_queries.size(), 9u);
        for (std::size_t j = 0; j < ep.support.size(); ++j) {
            EXPECT_EQ(ep.support_labels[j], static_cast<Index>(j / 2));
            EXPECT_EQ(ep.support[j].cls, ep.classes[j / 2]);
            EXPECT_EQ(ep.support[j].domain, Domain::kSource);
        }
        for (std::size_t j = 0; j < ep.source_queries.size(); ++j) {
            EXPECT_EQ(ep.source_query_labels[j], static_cast<Index>(j / 3));
            EXPECT_EQ(ep.source_queries[j].cls, ep.classes[j / 3]);
            for (const auto& s : ep.support) EXPECT_FALSE(s == ep.source_queries[j]);
        }
    }
}

TEST(SampleEpisode, TestModeTargetsBalancedOverEpisodeClasses) {
    const Dataset ds = ten_class_dataset();
    Rng rng(42);
    const Episode ep = sample_episode(ds, Split::kTrain, EpisodeSpec{4, 1, 2, 10}, rng, EpisodeMode::kTest);
    std::vector<Index> counts(4, 0);
    for (std::size_t i = 0; i < ep.target_labels.size(); ++i) {
        const Index l = ep.target_labels.at(i);
        ASSERT_GE(l, 0);
        ASSERT_LT(l, 4);
        ++counts[static_cast<std::size_t>(l)];
    }
    EXPECT_EQ(counts, (std::vector<Index>{3, 3, 2, 2}));
}

TEST(SampleEpisode, TrainModeTargetsComeFromWholeSplit) {
    const Dataset ds = ten_class_dataset();
    Rng rng(43);
    Index outside = 0;
    for (int i = 0; i < 20; ++i) {
        const Episode ep = sample_episode(ds, Split::kTrain, EpisodeSpec{2, 1, 2, 12}, rng, EpisodeMode::kTrain);
        for (std::size_t j = 0; j < ep.target_labels.size(); ++j) outside += ep.target_labels.at(j) < 0;
    }
    EXPECT_GT(outside, 0);
}

TEST(SampleEpisode, SameSeedSameEpisode) {
    const Dataset ds = ten_class_dataset();
    Rng a(44), b(44);
    for (int i = 0; i < 10; ++i)
        EXPECT_EQ(sample_episode(ds, Split::kTrain, EpisodeSpec{5, 1, 2, 10}, a, EpisodeMode::kTrain),
                  sample_episode(ds, Split::kTrain, EpisodeSpec{5, 1, 2, 10}, b, EpisodeMode::kTrain));
}

TEST(SampleEpisode, RejectsTooFewClassesOrSamples) {
    const Dataset& ds = testing::micro_dataset();
    Rng rng(45);
    EXPECT_THROW(sample_episode(ds, Split::kTrain, EpisodeSpec{4, 1, 2, 4}, rng, EpisodeMode::kTrain),
                 std::invalid_argument);
    EXPECT_THROW(sample_episode(ds, Split::kTrain, EpisodeSpec{2, 3, 4, 4}, rng, EpisodeMode::kTrain),
                 std::invalid_argument);
}

TEST(SampleEpisode, ClassFrequencyIsUniform) {
    const Dataset ds = ten_class_dataset();
    const auto& pool = ds.classes(Split::kTrain);
    const EpisodeSpec spec{5, 1, 2, 4};
    const int episodes = 10000;
    std::map<Index, double> counts;
    Rng rng(46);
    for (int i = 0; i < episodes; ++i)
        for (Index c : sample_episode(ds, Split::kTrain, spec, rng, EpisodeMode::kTrain).classes) counts[c] += 1;
    const double p = 5.0 / static_cast<double>(pool.size());
    const double expected = episodes * p;
    const double sigma = std::sqrt(episodes * p * (1 - p));
    double chi2 = 0;
    for (Index c : pool) {
        EXPECT_LE(std::abs(counts[c] - expected), 3 * sigma) << "class " << c;
        chi2 += (counts[c] - expected) * (counts[c] - expected) / expected;
    }
    // 99.9% quantile of chi-square with 9 degrees of freedom.
    EXPECT_LT(chi2, 27.877);
}

TEST(TotalObjective, ZeroWeightsEqualClsLoss) {
    const Dataset& ds = testing::micro_dataset();
    Embedding<double> net(micro_embedding_config(2));
    Discriminator<double> disc(4, 2);
    Rng rng(47);
    const Episode ep = sample_episode(ds, Split::kTrain, micro_episode_spec(), rng, EpisodeMode::kTrain);
    ObjectiveConfig cfg = micro_objective_config();
    cfg.weights = {0, 0, 0};
    Tape<double> tape(false);
    const auto terms = total_objective(tape, ep, ds, net, disc, cfg);
    EXPECT_EQ(terms.total.item(), terms.cls.item());
    EXPECT_FALSE(terms.spa.has_value());
    EXPECT_FALSE(terms.adv.has_value());
    EXPECT_FALSE(terms.msm.has_value());
}

TEST(TotalObjective, IdenticalQueriesGiveZeroSpa) {
    const Dataset& base = testing::micro_dataset();
    std::vector<std::array<Tensor<float>, 2>> stacks;
    for (Index c = 0; c < base.manifest().classes; ++c)
        stacks.push_back({base.images(c, Domain::kSource), base.images(c, Domain::kSource)});
    const Dataset same(base.manifest(), std::move(stacks));
    Rng rng(48);
    Episode ep = sample_episode(same, Split::kTrain, micro_episode_spec(), rng, EpisodeMode::kTrain);
    ep.target_queries.clear();
    std::vector<Index> labels;
    for (const auto& q : ep.source_queries) {
        ep.target_queries.push_back(Dataset::target_ref(q.cls, q.sample));
        labels.push_back(0);
    }
    ep.target_labels = TrackedLabels(labels);
    Embedding<double> net(micro_embedding_config(3));
    Discriminator<double> disc(4, 3);
    Tape<double> tape(false);
    const auto terms = total_objective(tape, ep, same, net, disc, micro_objective_config());
    ASSERT_TRUE(terms.spa.has_value());
    EXPECT_NEAR(terms.spa->item(), 0.0, 1e-12);
}

TEST(TotalObjective, GradientIsSumOfTermGradients) {
    const Dataset& ds = testing::micro_dataset();
    Rng rng(49);
    const Episode ep = sample_episode(ds, Split::kTrain, micro_episode_spec(), rng, EpisodeMode::kTrain);
    Embedding<double> net(micro_embedding_config(4));
    Discriminator<double> disc(4, 4);
    auto grad_of = [&](LossWeights w) {
        net.parameters().zero_grad();
        disc.parameters().zero_grad();
        ObjectiveConfig cfg = micro_objective_config();
        cfg.weights = w;
        Tape<double> tape;
        tape.backward(total_objective(tape, ep, ds, net, disc, cfg).total);
        Vector<double> g(net.parameters().scalar_count() + disc.parameters().scalar_count());
        Index o = 0;
        for (auto* set : {&net.parameters(), &disc.parameters()})
            for (const auto& p : *set) {
                g.segment(o, p.grad.size()) = p.grad.values();
                o += p.grad.size();
            }
        return g;
    };
    const Vector<double> cls = grad_of({0, 0, 0});
    const Vector<double> sum = cls + (grad_of({0.1, 0, 0}) - cls) + (grad_of({0, 0.05, 0}) - cls) +
                               (grad_of({0, 0, 0.1}) - cls);
    const Vector<double> total = grad_of({0.1, 0.05, 0.1});
    EXPECT_LE((total - sum).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, total.cwiseAbs().maxCoeff()));
}

TEST(Train, NeverReadsTargetLabels) {
    TrainConfig cfg = micro_train_config(5, 30);
    TrackedLabels::reset_total_reads();
    const auto model = train<float>(testing::micro_dataset(), cfg);
    EXPECT_EQ(TrackedLabels::total_reads(), 0u);

    // The counter does observe reads when labels are scored.
    EvalConfig ec;
    ec.episode = micro_episode_spec();
    ec.tasks = 3;
    ec.threads = 1;
    evaluate(testing::micro_dataset(), *model.net, ec, testing::micro_dataset().classes(Split::kTrain));
    EXPECT_GT(TrackedLabels::total_reads(), 0u);
}

TEST(Train, IdenticalRunsGiveIdenticalCheckpointBytes) {
    const TrainConfig cfg = micro_train_config(6, 40);
    std::vector<std::string> lines_a, lines_b;
    const auto a = train<float>(testing::micro_dataset(), cfg,
                                [&](const EpisodeMetrics& m) { lines_a.push_back(std::to_string(m.total)); });
    const auto b = train<float>(testing::micro_dataset(), cfg,
                                [&](const EpisodeMetrics& m) { lines_b.push_back(std::to_string(m.total)); });
    EXPECT_EQ(encode_checkpoint<float>({&a.net->parameters(), &a.disc->parameters()}),
              encode_checkpoint<float>({&b.net->parameters(), &b.disc->parameters()}));
    EXPECT_EQ(lines_a, lines_b);
    const TrainConfig other = micro_train_config(7, 40);
    const auto c = train<float>(testing::micro_dataset(), other);
    EXPECT_NE(encode_checkpoint<float>({&a.net->parameters()}), encode_checkpoint<float>({&c.net->parameters()}));
}

TEST(Train, MetricsRecordPerEpisode) {
    TrainConfig cfg = micro_train_config(8, 5);
    cfg.objective.weights = {0.1, 0, 0.1};
    cfg.fingerprint = "abc";
    std::vector<nlohmann::json> records;
    train<float>(testing::micro_dataset(), cfg,
                 [&](const EpisodeMetrics& m) { records.push_back(nlohmann::json::parse(m.to_json_line(cfg.fingerprint))); });
    ASSERT_EQ(records.size(), 5u);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        EXPECT_EQ(r["episode"], static_cast<long>(i));
        EXPECT_TRUE(r["l_cls"].is_number());
        EXPECT_TRUE(r["l_spa"].is_number());
        EXPECT_TRUE(r["l_adv"].is_null());
        EXPECT_TRUE(r["l_msm"].is_number());
        EXPECT_DOUBLE_EQ(r["lr"].get<double>(), 1e-4);
        EXPECT_EQ(r["fingerprint"], "abc");
        const double total = r["l_cls"].get<double>() + 0.1 * r["l_spa"].get<double>() + 0.1 * r["l_msm"].get<double>();
        EXPECT_NEAR(r["total"].get<double>(), total, 1e-4 * std::max(1.0, std::abs(total)));
    }
}

TEST(Train, ClsRunningMeanDecreases) {
    for (std::uint64_t seed : {1, 2, 3}) {
        TrainConfig cfg = micro_train_config(seed, 1000);
        cfg.objective.weights = {0, 0, 0};
        cfg.lr = 1e-3;
        std::vector<double> cls;
        train<float>(testing::micro_dataset(), cfg, [&](const EpisodeMetrics& m) { cls.push_back(m.l_cls); });
        const double first = std::accumulate(cls.begin(), cls.begin() + 200, 0.0) / 200;
        const double last = std::accumulate(cls.end() - 200, cls.end(), 0.0) / 200;
        EXPECT_LT(last, first) << "seed " << seed;
    }
}

TEST(Train, DivergenceAbortsWithEpisodeSeed) {
    const TrainConfig cfg = micro_train_config(9, 10);
    auto model = initial_model<float>(cfg);
    model.net->parameters().find("embed.block1.scale")->value.values().setConstant(INFINITY);
    try {
        train_model(model, testing::micro_dataset(), cfg);
        FAIL() << "non-finite loss accepted";
    } catch (const DivergenceError& e) {
        EXPECT_EQ(e.episode, 0);
        EXPECT_EQ(e.seed, episode_seed(cfg.seed, 0));
    }
}

TEST(Train, ConfigValidation) {
    TrainConfig cfg;
    cfg.episodes = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.episodes = 1;
    cfg.lr = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Train, AlternatingModeRuns) {
    TrainConfig cfg = micro_train_config(10, 10);
    cfg.alternating = true;
    const auto model = train<float>(testing::micro_dataset(), cfg);
    EXPECT_TRUE(model.net->parameters()[0].value.all_finite());
}

TEST(Summarize, ConfidenceConvention) {
    const EvalReport one = summarize({40});
    EXPECT_EQ(one.mean, 40);
    EXPECT_EQ(one.ci95, 0);
    const EvalReport r = summarize({10, 20, 30, 40});
    EXPECT_DOUBLE_EQ(r.mean, 25);
    EXPECT_NEAR(r.ci95, 1.96 * std::sqrt(500.0 / 3.0) / 2.0, 1e-12);
    EXPECT_NEAR(summarize({40, 30, 10, 20}).mean, r.mean, 1e-12);
}

TEST(Evaluate, RejectsClassOverlap) {
    const Dataset& ds = testing::micro_dataset();
    Embedding<float> net(micro_embedding_config(1));
    EvalConfig ec;
    ec.episode = micro_episode_spec();
    ec.tasks = 2;
    EXPECT_THROW(evaluate(ds, net, ec, ds.classes(Split::kTest)), std::invalid_argument);
}

TEST(Evaluate, ReportIndependentOfThreadCount) {
    const Dataset& ds = testing::micro_dataset();
    Embedding<float> net(micro_embedding_config(2));
    EvalConfig ec;
    ec.episode = micro_episode_spec();
    ec.tasks = 12;
    ec.threads = 1;
    const EvalReport a = evaluate(ds, net, ec, ds.classes(Split::kTrain));
    ec.threads = 4;
    const EvalReport b = evaluate(ds, net, ec, ds.classes(Split::kTrain));
    EXPECT_EQ(a.to_json(), b.to_json());
    EXPECT_EQ(a.tasks, 12);
    for (double acc : a.accuracies) {
        EXPECT_GE(acc, 0);
        EXPECT_LE(acc, 100);
    }
}

TEST(Evaluate, UninformativeNetworkScoresExactlyChance) {
    SyntheticSpec spec;
    spec.train_classes = 5;
    spec.val_classes = 0;
    spec.test_classes = 10;
    spec.samples = 20;
    const Dataset ds = generate_synthetic(spec);
    EmbeddingConfig ec;
    ec.channels = 16;
    Embedding<float> net(ec);
    // Zero maps tie every class score; the tie goes to the first class.
    for (auto& p : net.parameters())
        if (p.name.rfind("embed.block2.", 0) == 0) p.value.values().setZero();
    EvalConfig cfg;
    cfg.episode.queries = 1;
    cfg.tasks = 300;
    const EvalReport r = evaluate(ds, net, cfg, ds.classes(Split::kTrain));
    EXPECT_NEAR(r.mean, 20.0, 1e-9);
    EXPECT_NEAR(r.ci95, 0.0, 1e-9);
}

}  // namespace
}  // namespace fsuda
