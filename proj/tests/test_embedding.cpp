#include "fsuda/checkpoint.hpp"
#include "fsuda/embedding.hpp"
#include "fsuda/gradient_check.hpp"
#include "fsuda/ops.hpp"
#include "fsuda/synthetic.hpp"
#include "fsuda/verify.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

namespace fsuda {
namespace {

using T = Tensor<double>;

TEST(EmbeddingConfig, DefaultMapsTo5x5x32) {
    const EmbeddingConfig c;
    EXPECT_EQ(c.out_height(), 5);
    EXPECT_EQ(c.out_width(), 5);
    Embedding<float> net(c);
    Tape<float> tape(false);
    const auto maps = net.forward(tape, Tensor<float>({2, 32, 32, 1}));
    EXPECT_EQ(maps.shape(), (Shape{2, 5, 5, 32}));
}

TEST(EmbeddingConfig, MicroMapsTo3x3x4) {
    Embedding<double> net(micro_embedding_config(1));
    Tape<double> tape(false);
    EXPECT_EQ(net.forward(tape, T({9, 9, 1})).shape(), (Shape{1, 3, 3, 4}));
}

TEST(EmbeddingConfig, RejectsTooSmallPlane) {
    EmbeddingConfig c;
    c.in_height = c.in_width = 8;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Embed, RejectsExtentMismatch) {
    Embedding<double> net(micro_embedding_config(1));
    Tape<double> tape(false);
    EXPECT_THROW(net.forward(tape, T({8, 9, 1})), std::invalid_argument);
}

TEST(Embed, ZeroImageWithZeroFinalBlockGivesZeroMap) {
    Embedding<double> net(micro_embedding_config(2));
    for (auto& p : net.parameters())
        if (p.name.rfind("embed.block1.", 0) == 0) p.value.values().setZero();
    Tape<double> tape(false);
    EXPECT_EQ(net.forward(tape, T({9, 9, 1})).value().values().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Embed, SameSeedSameImageBitwiseIdentical) {
    const Dataset& ds = testing::micro_dataset();
    const Tensor<float>& img = ds.images(0, Domain::kSource);
    Embedding<float> a(micro_embedding_config(5)), b(micro_embedding_config(5));
    Tape<float> ta(false), tb(false);
    EXPECT_EQ(a.forward(ta, img).value(), b.forward(tb, img).value());
}

TEST(Embed, PassesGradientCheck) {
    Rng rng(11);
    Embedding<double> net(micro_embedding_config(3));
    for (auto& p : net.parameters())
        if (p.name.ends_with(".bias")) p.value = random_tensor(rng, p.value.shape(), 0.05, 0.3);
    const T images = random_tensor(rng, {2, 9, 9, 1}, 0, 1);
    const T weights = random_tensor(rng, {2, 3, 3, 4});
    GradCheckOptions opts;
    opts.step = 1e-5;
    opts.retry_above = 1e-4;
    opts.retry_steps = {1e-6, 1e-7, 1e-4};
    const auto r = gradient_check(
        [&](Tape<double>& t) { return sum(mul(net.forward(t, images), t.constant(weights))); }, net.parameters(),
        opts);
    EXPECT_LE(r.max_rel_error, 1e-3) << r.worst_parameter << "[" << r.worst_index << "]";
}

TEST(ExtractLds, SinglePixelIsChannelVector) {
    const T fm({1, 1, 3}, {0.1, -2, 7});
    Tape<double> tape(false);
    EXPECT_EQ(extract_lds(tape.constant(fm)).value(), T({1, 3}, {0.1, -2, 7}));
}

TEST(ExtractLds, MatchesPerPixelGatherAndRegroups) {
    Rng rng(12);
    const T fm = random_tensor(rng, {2, 3, 4, 5});
    Tape<double> tape(false);
    const T lds = extract_lds(tape.constant(fm)).value();
    ASSERT_EQ(lds.shape(), (Shape{24, 5}));
    for (Index b = 0; b < 2; ++b)
        for (Index y = 0; y < 3; ++y)
            for (Index x = 0; x < 4; ++x) {
                const Index row = ld_row({b, y, x}, 3, 4);
                const LdPosition p = ld_position(row, 3, 4);
                EXPECT_EQ(p.image, b);
                EXPECT_EQ(p.y, y);
                EXPECT_EQ(p.x, x);
                for (Index c = 0; c < 5; ++c) EXPECT_EQ(lds.at({row, c}), fm.at({b, y, x, c}));
            }
    EXPECT_EQ(lds.reshaped(fm.shape()), fm);
}

TEST(MultiscaleLds, ConstantMapGivesThirtyEqualDescriptors) {
    const T maps = T::constant({1, 5, 5, 3}, 0.0);
    T m = maps;
    for (Index i = 0; i < m.size(); ++i) m[i] = 0.5 * static_cast<double>(i % 3) - 0.2;
    Tape<double> tape(false);
    const T lds = multiscale_lds(tape.constant(m)).value();
    ASSERT_EQ(lds.shape(), (Shape{30, 3}));
    for (Index r = 0; r < 30; ++r)
        for (Index c = 0; c < 3; ++c) EXPECT_NEAR(lds.at({r, c}), 0.5 * static_cast<double>(c) - 0.2, 1e-12);
}

TEST(MultiscaleLds, FiveByFiveIsIdentityAndOneByOneIsMean) {
    Rng rng(13);
    const T m = random_tensor(rng, {2, 5, 5, 4});
    Tape<double> tape(false);
    const T lds = multiscale_lds(tape.constant(m)).value();
    ASSERT_EQ(lds.shape(), (Shape{60, 4}));
    for (Index b = 0; b < 2; ++b) {
        for (Index p = 0; p < 25; ++p)
            for (Index c = 0; c < 4; ++c) EXPECT_EQ(lds.at({b * 30 + p, c}), m[(b * 25 + p) * 4 + c]);
        for (Index c = 0; c < 4; ++c) {
            double s = 0;
            for (Index p = 0; p < 25; ++p) s += m[(b * 25 + p) * 4 + c];
            EXPECT_NEAR(lds.at({b * 30 + 29, c}), s / 25, 1e-12);
        }
    }
}

TEST(MultiscaleLds, TwoByTwoUsesFloorPartition) {
    Rng rng(14);
    const T m = random_tensor(rng, {1, 5, 5, 1});
    Tape<double> tape(false);
    const T lds = multiscale_lds(tape.constant(m)).value();
    // 5 splits into rows/cols [0,2) and [2,5).
    double s = 0;
    for (Index y = 0; y < 2; ++y)
        for (Index x = 2; x < 5; ++x) s += m.at({0, y, x, 0});
    EXPECT_NEAR(lds[25 + 1], s / 6, 1e-12);
}

TEST(MultiscaleLds, RejectsSmallMaps) {
    Tape<double> tape(false);
    EXPECT_THROW(multiscale_lds(tape.constant(T({1, 4, 5, 2}))), std::invalid_argument);
}

struct SourceSet {
    Tensor<float> images;
    std::vector<Index> labels;
};

SourceSet ten_class_set(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.train_classes = 10;
    spec.val_classes = 0;
    spec.test_classes = 1;
    spec.samples = 12;
    spec.seed = seed;
    const Dataset ds = generate_synthetic(spec);
    std::vector<ImageRef> refs;
    SourceSet out;
    for (Index c : ds.classes(Split::kTrain))
        for (Index s = 0; s < spec.samples; ++s) {
            refs.push_back({c, s, Domain::kSource});
            out.labels.push_back(c);
        }
    out.images = ds.gather<float>(std::span<const ImageRef>(refs));
    return out;
}

TEST(Pretrain, LossDecreasesOverEpochs) {
    for (std::uint64_t seed : {1, 2, 3}) {
        const SourceSet set = ten_class_set(seed);
        EmbeddingConfig ec;
        ec.channels = 16;
        ec.seed = seed;
        Embedding<float> net(ec);
        PretrainConfig pc;
        pc.epochs = 4;
        pc.batch = 24;
        pc.seed = seed;
        const auto losses = pretrain(net, set.images, set.labels, 10, pc);
        ASSERT_EQ(losses.size(), 4u);
        EXPECT_LT(losses.back(), losses.front()) << "seed " << seed;
    }
}

TEST(Pretrain, KeepsArchitectureAndRejectsOneClass) {
    const SourceSet set = ten_class_set(4);
    EmbeddingConfig ec;
    ec.channels = 8;
    Embedding<float> net(ec), fresh(ec);
    PretrainConfig pc;
    pc.epochs = 1;
    pretrain(net, set.images, set.labels, 10, pc);
    ASSERT_EQ(net.parameters().size(), fresh.parameters().size());
    for (std::size_t i = 0; i < fresh.parameters().size(); ++i) {
        EXPECT_EQ(net.parameters()[i].name, fresh.parameters()[i].name);
        EXPECT_EQ(net.parameters()[i].value.shape(), fresh.parameters()[i].value.shape());
    }
    EXPECT_NE(net.parameters()[0].value, fresh.parameters()[0].value);
    const std::vector<Index> one(set.labels.size(), 0);
    EXPECT_THROW(pretrain(net, set.images, one, 1, pc), std::invalid_argument);
}

TEST(Checkpoint, RoundTripAndConfigInference) {
    testing::TempDir dir("ckpt");
    EmbeddingConfig ec;
    ec.channels = 8;
    ec.seed = 9;
    Embedding<float> net(ec);
    save_checkpoint<float>(dir / "a.ckpt", {&net.parameters()});
    const auto entries = load_checkpoint(dir / "a.ckpt");
    const EmbeddingConfig inferred = infer_embedding_config(entries, 32, 32);
    EXPECT_EQ(inferred.blocks, 3);
    EXPECT_EQ(inferred.channels, 8);
    Embedding<float> other(inferred);
    EXPECT_EQ(assign_parameters(other.parameters(), entries), net.parameters().size());
    for (std::size_t i = 0; i < net.parameters().size(); ++i)
        EXPECT_EQ(other.parameters()[i].value, net.parameters()[i].value);
    EXPECT_EQ(read_file(dir / "a.ckpt"), encode_checkpoint<float>({&other.parameters()}));
}

TEST(Checkpoint, RejectsTruncation) {
    Embedding<float> net(micro_embedding_config(1));
    const std::string bytes = encode_checkpoint<float>({&net.parameters()});
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), std::runtime_error);
    EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4)), std::runtime_error);
}

}  // namespace
}  // namespace fsuda
