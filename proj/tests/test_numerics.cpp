#include "fsuda/adam.hpp"
#include "fsuda/gradient_check.hpp"
#include "fsuda/ops.hpp"
#include "fsuda/verify.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace fsuda {
namespace {

using T = Tensor<double>;

T eval(const std::function<Var<double>(Tape<double>&)>& f) {
    Tape<double> tape(false);
    return f(tape).value();
}

double max_abs_diff(const T& a, const T& b) {
    EXPECT_EQ(a.shape(), b.shape());
    return (a.values() - b.values()).cwiseAbs().maxCoeff();
}

TEST(Matmul, IdentityTimesB) {
    const T b({3, 2}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(eval([&](Tape<double>& t) { return matmul(t.constant(T::identity(3)), t.constant(b)); }), b);
}

TEST(Matmul, OneByOne) {
    const T c = eval([](Tape<double>& t) { return matmul(t.constant(T({1, 1}, {2})), t.constant(T({1, 1}, {3}))); });
    EXPECT_EQ(c, T({1, 1}, {6}));
}

TEST(Matmul, MatchesTripleLoopOracle) {
    Rng rng(3);
    for (int i = 0; i < 10; ++i) {
        const T a = random_tensor(rng, {4, 3}), b = random_tensor(rng, {3, 5});
        EXPECT_LE(max_abs_diff(eval([&](Tape<double>& t) { return matmul(t.constant(a), t.constant(b)); }),
                               oracle::matmul(a, b)),
                  1e-6);
    }
}

TEST(Matmul, ShapeMismatchReportsExtents) {
    Tape<double> t(false);
    try {
        matmul(t.constant(T({2, 3})), t.constant(T({4, 2})));
        FAIL() << "mismatch accepted";
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find('3'), std::string::npos) << msg;
        EXPECT_NE(msg.find('4'), std::string::npos) << msg;
    }
}

TEST(Conv2d, CenteredDeltaKernelIsIdentity) {
    Rng rng(4);
    const T x = random_tensor(rng, {5, 4, 1});
    T w({3, 3, 1, 1});
    w.at({1, 1, 0, 0}) = 1;
    EXPECT_EQ(eval([&](Tape<double>& t) { return conv2d(t.constant(x), t.constant(w), 1, 1); }), x);
}

TEST(Conv2d, ZeroInputGivesZeroOutput) {
    Rng rng(5);
    const T w = random_tensor(rng, {3, 3, 2, 3});
    const T y = eval([&](Tape<double>& t) { return conv2d(t.constant(T({6, 6, 2})), t.constant(w), 1, 1); });
    EXPECT_EQ(y.values().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Conv2d, TwoByTwoKernelMatchesDirectSum) {
    const T x({3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const T w({2, 2, 1, 1}, {1, -1, 0.5, 2});
    const T y = eval([&](Tape<double>& t) { return conv2d(t.constant(x), t.constant(w), 1, 0); });
    ASSERT_EQ(y.shape(), (Shape{2, 2, 1}));
    for (Index r = 0; r < 2; ++r)
        for (Index c = 0; c < 2; ++c) {
            const double want = x.at({r, c, 0}) - x.at({r, c + 1, 0}) + 0.5 * x.at({r + 1, c, 0}) +
                                2 * x.at({r + 1, c + 1, 0});
            EXPECT_DOUBLE_EQ(y.at({r, c, 0}), want);
        }
}

TEST(Conv2d, MatchesOracleUpToExtentEight) {
    Rng rng(6);
    for (int i = 0; i < 10; ++i) {
        const Index h = 3 + static_cast<Index>(uniform_index(rng, 6)), w = 3 + static_cast<Index>(uniform_index(rng, 6));
        const Index stride = 1 + static_cast<Index>(uniform_index(rng, 2)), pad = static_cast<Index>(uniform_index(rng, 2));
        const T x = random_tensor(rng, {2, h, w, 3}), k = random_tensor(rng, {3, 3, 3, 4});
        EXPECT_LE(max_abs_diff(eval([&](Tape<double>& t) { return conv2d(t.constant(x), t.constant(k), stride, pad); }),
                               oracle::conv2d(x, k, stride, pad)),
                  1e-6);
    }
}

TEST(Conv2d, RejectsZeroStride) {
    Tape<double> t(false);
    EXPECT_THROW(conv2d(t.constant(T({4, 4, 1})), t.constant(T({3, 3, 1, 1})), 0, 1), std::invalid_argument);
}

TEST(Relu, ForwardAndZeroSubgradient) {
    ParameterSet<double> ps;
    auto& x = ps.add("x", T({3}, {-1, 0, 2}));
    Tape<double> tape;
    const Var<double> y = relu(tape.param(x));
    EXPECT_EQ(y.value(), T({3}, {0, 0, 2}));
    tape.backward(sum(y));
    EXPECT_EQ(x.grad, T({3}, {0, 0, 1}));
}

TEST(Relu, PositiveInputUnchanged) {
    const T x({4}, {0.5, 1, 2, 3});
    EXPECT_EQ(eval([&](Tape<double>& t) { return relu(t.constant(x)); }), x);
}

TEST(Pool2d, ConstantFieldMax) {
    const T x = T::constant({4, 6, 2}, 1.5);
    const T y = eval([&](Tape<double>& t) { return pool2d(t.constant(x), PoolMode::kMax, PoolGeometry{}); });
    EXPECT_EQ(y, T::constant({2, 3, 2}, 1.5));
}

TEST(Pool2d, CeilModeExtents) {
    EXPECT_EQ(pooled_extent(5, PoolGeometry{2, 2, true}), 3);
    EXPECT_EQ(pooled_extent(5, PoolGeometry{2, 2, false}), 2);
    const T y = eval([](Tape<double>& t) {
        return pool2d(t.constant(T({5, 5, 1})), PoolMode::kMax, PoolGeometry{2, 2, true});
    });
    EXPECT_EQ(y.shape(), (Shape{3, 3, 1}));
}

TEST(Pool2d, RaggedAverageDividesByWindowCount) {
    const T x({3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const T y = eval([&](Tape<double>& t) { return pool2d(t.constant(x), PoolMode::kAvg, PoolGeometry{2, 2, true}); });
    EXPECT_DOUBLE_EQ(y.at({0, 0, 0}), 3.0);
    EXPECT_DOUBLE_EQ(y.at({0, 1, 0}), 4.5);
    EXPECT_DOUBLE_EQ(y.at({1, 0, 0}), 7.5);
    EXPECT_DOUBLE_EQ(y.at({1, 1, 0}), 9.0);
}

TEST(Pool2d, AdaptiveToOneIsGlobalMean) {
    Rng rng(8);
    const T x = random_tensor(rng, {5, 7, 3});
    const T y = eval([&](Tape<double>& t) { return adaptive_avg_pool2d(t.constant(x), 1, 1); });
    for (Index c = 0; c < 3; ++c) {
        double s = 0;
        for (Index i = 0; i < 35; ++i) s += x[i * 3 + c];
        EXPECT_NEAR(y[c], s / 35, 1e-12);
    }
}

TEST(L2Normalize, UnitScaledAndZeroRows) {
    const T m({3, 2}, {0.6, 0.8, 3, 4, 0, 0});
    const T y = eval([&](Tape<double>& t) { return l2_normalize_rows(t.constant(m)); });
    EXPECT_NEAR(y[0], 0.6, 1e-15);
    EXPECT_NEAR(y[1], 0.8, 1e-15);
    EXPECT_NEAR(y[2], 0.6, 1e-15);
    EXPECT_NEAR(y[3], 0.8, 1e-15);
    EXPECT_EQ(y[4], 0.0);
    EXPECT_EQ(y[5], 0.0);
    EXPECT_TRUE(y.all_finite());
}

TEST(ParamTape, ClearZeroesGradients) {
    ParameterSet<double> ps;
    auto& w = ps.add("w", T({2, 2}, {1, 2, 3, 4}));
    Tape<double> tape;
    ParamTape<double> pt{ps, tape};
    tape.backward(sum(mul(tape.param(w), tape.param(w))));
    EXPECT_EQ(w.grad.shape(), w.value.shape());
    EXPECT_GT(w.grad.values().cwiseAbs().maxCoeff(), 0.0);
    pt.clear();
    EXPECT_EQ(tape.node_count(), 0u);
    EXPECT_EQ(w.grad.values().cwiseAbs().maxCoeff(), 0.0);
}

TEST(GradientCheck, SquareAtThree) {
    ParameterSet<double> ps;
    ps.add("x", T({1}, {3}));
    const auto r = gradient_check([&](Tape<double>& t) { return sum(mul(t.param(ps[0]), t.param(ps[0]))); }, ps);
    EXPECT_NEAR(r.analytic, 6.0, 1e-12);
    EXPECT_NEAR(r.numeric, 6.0, 1e-6);
    EXPECT_LE(r.max_rel_error, 1e-8);
}

TEST(GradientCheck, FlagsCorruptedGradient) {
    Rng rng(9);
    ParameterSet<double> ps;
    ps.add("a", random_tensor(rng, {3, 4}));
    const T b = random_tensor(rng, {4, 2});
    auto f = [&](Tape<double>& t) { return sum(mul(matmul(t.param(ps[0]), t.constant(b)), matmul(t.param(ps[0]), t.constant(b)))); };
    GradCheckOptions opts;
    opts.corrupt_factor = 1.01;
    EXPECT_GE(gradient_check(f, ps, opts).max_rel_error, 5e-3);
    EXPECT_LE(gradient_check(f, ps).max_rel_error, 1e-6);
}

TEST(GradientCheck, RejectsNonFiniteLoss) {
    ParameterSet<double> ps;
    ps.add("x", T({2}, {1, INFINITY}));
    EXPECT_THROW(gradient_check([&](Tape<double>& t) { return sum(t.param(ps[0])); }, ps), std::domain_error);
}

TEST(GradientCheck, RestoresParameterValues) {
    Rng rng(10);
    ParameterSet<double> ps;
    const T init = random_tensor(rng, {5});
    ps.add("x", init);
    gradient_check([&](Tape<double>& t) { return sum(exp(t.param(ps[0]))); }, ps);
    EXPECT_EQ(ps[0].value, init);
}

TEST(GradientCheck, PrimitiveSuitePasses) {
    SuiteOptions opts;
    opts.instances = 4;
    for (const auto& r : run_gradcheck_suite(opts)) EXPECT_TRUE(r.pass) << r.name << " " << r.value << " " << r.detail;
}

TEST(Adam, StepDecaySchedule) {
    EXPECT_DOUBLE_EQ(step_decay_rate(1e-4, 0, 1000), 1e-4);
    EXPECT_DOUBLE_EQ(step_decay_rate(1e-4, 999, 1000), 1e-4);
    EXPECT_DOUBLE_EQ(step_decay_rate(1e-4, 1000, 1000), 5e-5);
    EXPECT_DOUBLE_EQ(step_decay_rate(1e-4, 2500, 1000), 2.5e-5);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    ParameterSet<double> ps;
    auto& x = ps.add("x", T({2}, {1, -1}));
    x.grad = T({2}, {0.3, -20});
    Adam<double> opt({&ps});
    opt.step(0.01);
    EXPECT_NEAR(x.value[0], 0.99, 1e-9);
    EXPECT_NEAR(x.value[1], -0.99, 1e-9);
}

TEST(Adam, MinimizesQuadratic) {
    ParameterSet<double> ps;
    auto& x = ps.add("x", T({3}, {2, -3, 1}));
    Adam<double> opt({&ps});
    for (int i = 0; i < 2000; ++i) {
        Tape<double> tape;
        ps.zero_grad();
        tape.backward(sum(mul(tape.param(x), tape.param(x))));
        opt.step(0.01);
    }
    EXPECT_LT(x.value.values().cwiseAbs().maxCoeff(), 1e-2);
}

}  // namespace
}  // namespace fsuda
