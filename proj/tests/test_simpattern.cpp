#include "fsuda/embedding.hpp"
#include "fsuda/ops.hpp"
#include "fsuda/simpattern.hpp"
#include "fsuda/verify.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace fsuda {
namespace {

using T = Tensor<double>;

T cosine(const T& q, const T& s) {
    Tape<double> tape(false);
    return cosine_matrix(tape.constant(q), tape.constant(s)).value();
}

T topk(const T& m, Index k, Index block = 0) {
    Tape<double> tape(false);
    return topk_sparsify(tape.constant(m), k, block).value();
}

T encode(const T& sim, Index h, Index w) {
    Tape<double> tape(false);
    return encode_pattern(tape.constant(sim), h, w, 0.8).value();
}

TEST(Cosine, IdenticalAndOrthogonal) {
    EXPECT_NEAR(cosine(T({1, 3}, {1, 2, 3}), T({1, 3}, {1, 2, 3}))[0], 1.0, 1e-15);
    EXPECT_NEAR(cosine(T({1, 2}, {1, 0}), T({1, 2}, {0, 4}))[0], 0.0, 1e-15);
}

TEST(Cosine, MatchesDoubleLoopOracleAndStaysInRange) {
    Rng rng(21);
    for (int i = 0; i < 20; ++i) {
        const T q = random_tensor(rng, {4, 3}), s = random_tensor(rng, {6, 3});
        const T got = cosine(q, s);
        EXPECT_LE((got.values() - oracle::cosine(q, s).values()).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_LE(got.values().cwiseAbs().maxCoeff(), 1.0 + 1e-12);
    }
}

TEST(Cosine, ZeroDescriptorIsFinite) {
    const T got = cosine(T({1, 3}), T({2, 3}, {1, 2, 3, 0, 0, 0}));
    EXPECT_TRUE(got.all_finite());
    EXPECT_EQ(got.values().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Cosine, RejectsWidthMismatch) {
    Tape<double> tape(false);
    EXPECT_THROW(cosine_matrix(tape.constant(T({2, 3})), tape.constant(T({2, 4}))), std::invalid_argument);
}

TEST(Topk, Examples) {
    EXPECT_EQ(topk(T({1, 3}, {0.9, 0.1, 0.5}), 2), T({1, 3}, {0.9, 0, 0.5}));
    EXPECT_EQ(topk(T({1, 3}, {0.5, 0.5, 0.2}), 1), T({1, 3}, {0.5, 0, 0}));
    const T m({2, 3}, {0.3, -0.2, 0.1, 0.4, 0.4, 0.4});
    EXPECT_EQ(topk(m, 3), m);
    EXPECT_EQ(topk(m, 7), m);
}

TEST(Topk, AtMostKNonzerosPerRowBlock) {
    Rng rng(22);
    for (int i = 0; i < 20; ++i) {
        const Index k = 1 + static_cast<Index>(uniform_index(rng, 4));
        const T m = random_tensor(rng, {5, 12});
        const T got = topk(m, k, 6);
        EXPECT_EQ(got, oracle::topk(m, k, 6));
        for (Index r = 0; r < 5; ++r)
            for (Index b = 0; b < 2; ++b) {
                Index nz = 0;
                for (Index j = 0; j < 6; ++j) nz += got.at({r, b * 6 + j}) != 0.0;
                EXPECT_LE(nz, k);
            }
    }
}

TEST(Topk, DroppedEntriesGetNoGradient) {
    ParameterSet<double> ps;
    auto& m = ps.add("m", T({1, 4}, {0.1, 0.9, 0.4, 0.7}));
    Tape<double> tape;
    tape.backward(sum(topk_sparsify(tape.param(m), 2)));
    EXPECT_EQ(m.grad, T({1, 4}, {0, 1, 0, 1}));
}

TEST(Gaussian, WeightsAtSigmaPointEight) {
    const auto g = gaussian_weights(0.8);
    EXPECT_DOUBLE_EQ(g[4], 1.0);
    EXPECT_NEAR(g[1], std::exp(-1 / 1.28), 1e-15);
    EXPECT_NEAR(g[1], 0.45783, 1e-5);
    EXPECT_NEAR(g[0], 0.20961, 1e-5);
    double total = 0;
    for (double v : g) total += v;
    // Frozen from direct evaluation: 1 + 4 exp(-1/1.28) + 4 exp(-2/1.28).
    EXPECT_NEAR(total, 3.6697789, 1e-6);
}

TEST(Gaussian, PreservesConstantsAndRange) {
    Rng rng(23);
    T c = T::constant({1, 4, 5, 2}, 0.37);
    Tape<double> tape(false);
    const T smoothed = gaussian_smooth(tape.constant(c), 0.8).value();
    EXPECT_LE((smoothed.values().array() - 0.37).abs().maxCoeff(), 1e-15);
    const T r = random_tensor(rng, {2, 5, 6, 3});
    const T rs = gaussian_smooth(tape.constant(r), 0.8).value();
    EXPECT_LE(rs.values().maxCoeff(), r.values().maxCoeff() + 1e-15);
    EXPECT_GE(rs.values().minCoeff(), r.values().minCoeff() - 1e-15);
}

TEST(EncodePattern, ConstantPlaneFixedPoint) {
    for (Index h = 1; h <= 6; ++h)
        for (Index w = 1; w <= 6; ++w) {
            const T sim = T::constant({h * w, 2}, -0.4);
            const T p = encode(sim, h, w);
            const double positions = static_cast<double>(((h + 1) / 2) * ((w + 1) / 2));
            EXPECT_EQ(pooled_positions(h, w), static_cast<Index>(positions));
            EXPECT_NEAR(p[0], -0.4 * positions, 1e-6);
            EXPECT_NEAR(p[1], -0.4 * positions, 1e-6);
        }
}

TEST(EncodePattern, TwoByTwoMatchesNaiveReference) {
    Rng rng(24);
    for (int i = 0; i < 20; ++i) {
        const T sim = random_tensor(rng, {4, 4});
        const T p = encode(sim, 2, 2);
        const auto want = oracle::encode_pattern(sim, 2, 2, 0.8);
        for (Index j = 0; j < 4; ++j) EXPECT_NEAR(p[j], want[static_cast<std::size_t>(j)], 1e-6);
    }
}

TEST(EncodePattern, MatchesOracleOnRandomExtents) {
    Rng rng(25);
    for (int i = 0; i < 100; ++i) {
        const Index h = 1 + static_cast<Index>(uniform_index(rng, 6)), w = 1 + static_cast<Index>(uniform_index(rng, 6));
        const Index j = 1 + static_cast<Index>(uniform_index(rng, 6));
        const T sim = random_tensor(rng, {h * w, j});
        const T p = encode(sim, h, w);
        const auto want = oracle::encode_pattern(sim, h, w, 0.8);
        for (Index c = 0; c < j; ++c) EXPECT_NEAR(p[c], want[static_cast<std::size_t>(c)], 1e-6);
    }
}

TEST(EncodePattern, RejectsRowMismatch) {
    Tape<double> tape(false);
    EXPECT_THROW(encode_pattern(tape.constant(T({5, 2})), 2, 3), std::invalid_argument);
}

TEST(ClassScores, SumOfSlicesPerClass) {
    Tape<double> tape(false);
    EXPECT_EQ(class_scores(tape.constant(T({1, 4})), 2).value(), T({1, 2}));
    const T onehot({1, 4}, {0, 0, 2.5, 0});
    EXPECT_EQ(class_scores(tape.constant(onehot), 2).value(), T({1, 2}, {0, 2.5}));
    Rng rng(26);
    const T p = random_tensor(rng, {3, 12});
    const T s = class_scores(tape.constant(p), 3).value();
    for (Index q = 0; q < 3; ++q)
        for (Index c = 0; c < 3; ++c) {
            const double slice_a = p.values().segment(q * 12 + c * 4, 2).sum();
            const double slice_b = p.values().segment(q * 12 + c * 4 + 2, 2).sum();
            EXPECT_NEAR(s.at({q, c}), slice_a + slice_b, 1e-12);
        }
}

TEST(ClsLoss, ClosedFormsAndOracle) {
    Tape<double> tape(false);
    const std::vector<Index> zero{0};
    EXPECT_EQ(cls_loss(tape.constant(T({1, 1}, {4.2})), std::span<const Index>(zero)).item(), 0.0);
    const std::vector<Index> labels{1, 4, 0};
    EXPECT_NEAR(cls_loss(tape.constant(T::constant({3, 5}, -0.3)), std::span<const Index>(labels)).item(),
                std::log(5.0), 1e-12);
    Rng rng(27);
    const T scores = random_tensor(rng, {3, 5}, -4, 4);
    EXPECT_NEAR(cls_loss(tape.constant(scores), std::span<const Index>(labels)).item(),
                oracle::cross_entropy(scores, labels), 1e-9);
}

TEST(ClsLoss, RejectsOutOfRangeLabel) {
    Tape<double> tape(false);
    const std::vector<Index> bad{5};
    EXPECT_THROW(cls_loss(tape.constant(T({1, 5})), std::span<const Index>(bad)), std::invalid_argument);
    const std::vector<Index> negative{-1};
    EXPECT_THROW(cls_loss(tape.constant(T({1, 5})), std::span<const Index>(negative)), std::invalid_argument);
}

TEST(Classify, ArgmaxAndShiftInvariance) {
    const std::vector<double> s{0.1, 3.2, -1};
    EXPECT_EQ(argmax<double>(s), 1);  // the second class
    const std::vector<double> shifted{7.1, 10.2, 6};
    EXPECT_EQ(argmax<double>(shifted), 1);
    const std::vector<double> tie{2, 2, 1};
    EXPECT_EQ(argmax<double>(tie), 0);
    EXPECT_EQ(predict(T({2, 3}, {0.1, 3.2, -1, 5, 5, 5})), (std::vector<Index>{1, 0}));
}

TEST(Classify, QueryEqualToSupportImageWins) {
    const Dataset& ds = testing::micro_dataset();
    Embedding<double> net(micro_embedding_config(4));
    const std::vector<ImageRef> support{{0, 0, Domain::kSource}, {1, 0, Domain::kSource}};
    Tape<double> tape(false);
    const T maps = net.forward(tape, ds.gather<double>(std::span<const ImageRef>(support))).value();
    const SupportContext<double> ctx(maps, 2, 1);
    for (Index c = 0; c < 2; ++c) {
        T one({3, 3, 4});
        one.values() = maps.values().segment(c * 36, 36);
        EXPECT_EQ(ctx.classify(one), c);
    }
}

}  // namespace
}  // namespace fsuda
