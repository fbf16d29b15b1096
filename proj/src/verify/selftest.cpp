#include "fsuda/verify.hpp"

#include "fsuda/alignment.hpp"
#include "fsuda/ops.hpp"
#include "fsuda/simpattern.hpp"

#include <algorithm>
#include <cmath>

namespace fsuda {

namespace {

using T = Tensor<double>;
using V = Var<double>;

double max_abs_diff(const T& a, const T& b) {
    if (a.size() != b.size()) return INFINITY;
    return a.size() == 0 ? 0.0 : (a.values() - b.values()).cwiseAbs().maxCoeff();
}

class Collector {
public:
    void expect_close(const std::string& name, double got, double want, double tol) {
        const double err = std::abs(got - want);
        results_.push_back({name, std::isfinite(got) && err <= tol, err, tol,
                            "got " + std::to_string(got) + " want " + std::to_string(want)});
    }
    void expect_max(const std::string& name, double worst, double tol) {
        results_.push_back({name, std::isfinite(worst) && worst <= tol, worst, tol, {}});
    }
    std::vector<CheckResult> take() { return std::move(results_); }

private:
    std::vector<CheckResult> results_;
};

Index uniform_between(Rng& rng, Index lo, Index hi) {
    return lo + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1)));
}

// cosine -> top-k -> reshape -> smooth -> pool -> sum, library versus loops.
// C >= 2: with one channel every cosine is exactly +-1 and top-k ties are
// decided by rounding noise rather than by index.
double encoder_oracle_error(Rng& rng) {
    const Index h = uniform_between(rng, 1, 6), w = uniform_between(rng, 1, 6);
    const Index ways = uniform_between(rng, 1, 3), shots = uniform_between(rng, 1, 2);
    const Index c = uniform_between(rng, 2, 6), queries = uniform_between(rng, 1, 2);
    const Index k = uniform_between(rng, 1, 4);
    const Index plane = h * w, block = shots * plane;
    const T q = random_tensor(rng, {queries * plane, c});
    const T s = random_tensor(rng, {ways * block, c});

    Tape<double> tape(false);
    const T got = similarity_patterns(tape.constant(q), tape.constant(s), h, w, shots, EncoderConfig{k, 0.8}).value();

    const T sims = oracle::topk(oracle::cosine(q, s), k, block);
    const Index cols = sims.extent(1);
    double worst = 0;
    for (Index i = 0; i < queries; ++i) {
        T one({plane, cols});
        one.values() = sims.values().segment(i * plane * cols, plane * cols);
        const std::vector<double> want = oracle::encode_pattern(one, h, w, 0.8);
        for (Index j = 0; j < cols; ++j)
            worst = std::max(worst, std::abs(got[i * cols + j] - want[static_cast<std::size_t>(j)]));
    }
    return worst;
}

void encoder_checks(Collector& out, Rng& rng) {
    double worst = 0;
    for (int i = 0; i < 100; ++i) worst = std::max(worst, encoder_oracle_error(rng));
    out.expect_max("encoder_oracle_100_instances", worst, 1e-6);

    // Constant columns survive smoothing; each pooled position contributes the constant.
    double fixed_point = 0;
    for (Index h = 1; h <= 6; ++h)
        for (Index w = 1; w <= 6; ++w) {
            T sims({h * w, 3});
            for (Index r = 0; r < h * w; ++r)
                for (Index j = 0; j < 3; ++j) sims[r * 3 + j] = 0.25 * static_cast<double>(j) - 0.3;
            Tape<double> tape(false);
            const T pattern = encode_pattern(tape.constant(sims), h, w, 0.8).value();
            const double positions = static_cast<double>(((h + 1) / 2) * ((w + 1) / 2));
            for (Index j = 0; j < 3; ++j)
                fixed_point = std::max(fixed_point, std::abs(pattern[j] - positions * sims[j]));
        }
    out.expect_max("encoder_constant_fixed_point", fixed_point, 1e-6);

    const auto g = gaussian_weights(0.8);
    double total = 0;
    for (double v : g) total += v;
    out.expect_close("gaussian_center_weight", g[4], 1.0, 1e-12);
    out.expect_close("gaussian_edge_weight", g[1], 0.45783, 1e-5);
    out.expect_close("gaussian_corner_weight", g[0], 0.20961, 1e-5);
    out.expect_close("gaussian_interior_sum", total, 3.6697789, 1e-6);

    Tape<double> tape(false);
    const T row({1, 3}, {0.9, 0.1, 0.5});
    const T kept = topk_sparsify(tape.constant(row), 2).value();
    out.expect_max("topk_keeps_two_largest", max_abs_diff(kept, T({1, 3}, {0.9, 0.0, 0.5})), 0.0);
    const T tie = topk_sparsify(tape.constant(T({1, 3}, {0.5, 0.5, 0.2})), 1).value();
    out.expect_max("topk_tie_lowest_index", max_abs_diff(tie, T({1, 3}, {0.5, 0.0, 0.0})), 0.0);
}

void primitive_oracles(Collector& out, Rng& rng) {
    double mm = 0, conv = 0, cos = 0, topk = 0;
    for (int i = 0; i < 20; ++i) {
        Tape<double> tape(false);
        const T a = random_tensor(rng, {uniform_between(rng, 1, 5), 4});
        const T b = random_tensor(rng, {4, uniform_between(rng, 1, 5)});
        mm = std::max(mm, max_abs_diff(matmul(tape.constant(a), tape.constant(b)).value(), oracle::matmul(a, b)));

        const Index stride = uniform_between(rng, 1, 2), pad = uniform_between(rng, 0, 1);
        const T x = random_tensor(rng, {2, 6, 5, 3});
        const T wt = random_tensor(rng, {3, 3, 3, 2});
        conv = std::max(conv, max_abs_diff(conv2d(tape.constant(x), tape.constant(wt), stride, pad).value(),
                                           oracle::conv2d(x, wt, stride, pad)));

        const T q = random_tensor(rng, {4, 3}), s = random_tensor(rng, {6, 3});
        cos = std::max(cos, max_abs_diff(cosine_matrix(tape.constant(q), tape.constant(s)).value(), oracle::cosine(q, s)));

        const T m = random_tensor(rng, {3, 8});
        const Index k = uniform_between(rng, 1, 5);
        topk = std::max(topk, max_abs_diff(topk_sparsify(tape.constant(m), k, 4).value(), oracle::topk(m, k, 4)));
    }
    out.expect_max("matmul_oracle", mm, 1e-12);
    out.expect_max("conv2d_oracle", conv, 1e-12);
    out.expect_max("cosine_oracle", cos, 1e-6);
    out.expect_max("topk_oracle", topk, 0.0);
}

void loss_oracles(Collector& out, Rng& rng) {
    double cov = 0, spa = 0, rspa = 0, msm = 0, cls = 0;
    for (int i = 0; i < 20; ++i) {
        Tape<double> tape(false);
        const T pset = random_tensor(rng, {10, 4});
        cov = std::max(cov, max_abs_diff(covariance(tape.constant(pset)).value(), oracle::covariance(pset)));

        std::vector<T> src, tgt;
        std::vector<V> vs, vt;
        for (int j = 0; j < 3; ++j) {
            src.push_back(random_tensor(rng, {5, 4}));
            tgt.push_back(random_tensor(rng, {6, 4}));
            vs.push_back(tape.constant(src.back()));
            vt.push_back(tape.constant(tgt.back()));
        }
        spa = std::max(spa, std::abs(spa_loss(std::span<const V>(vs), std::span<const V>(vt)).item() -
                                     oracle::spa(src, tgt)));
        rspa = std::max(rspa, std::abs(rspa_loss(std::span<const V>(vs)).item() - oracle::rspa(src)));

        const T tl = random_tensor(rng, {12, 4}), ms = random_tensor(rng, {14, 4});
        msm = std::max(msm, std::abs(msm_loss(tape.constant(tl), tape.constant(ms), 3, MsmConfig{3, 10}).item() -
                                     oracle::msm(tl, ms, 3, 3, 10)));

        const T scores = random_tensor(rng, {6, 5}, -3, 3);
        std::vector<Index> labels;
        for (int j = 0; j < 6; ++j) labels.push_back(static_cast<Index>(uniform_index(rng, 5)));
        cls = std::max(cls, std::abs(cls_loss(tape.constant(scores), std::span<const Index>(labels)).item() -
                                     oracle::cross_entropy(scores, labels)));
    }
    out.expect_max("covariance_two_pass_oracle", cov, 1e-9);
    out.expect_max("spa_direct_oracle", spa, 1e-9);
    out.expect_max("rspa_direct_oracle", rspa, 1e-9);
    out.expect_max("msm_exhaustive_sort_oracle", msm, 1e-9);
    out.expect_max("cls_softmax_oracle", cls, 1e-9);
}

void closed_forms(Collector& out) {
    Tape<double> tape(false);
    const T two({2, 2}, {1, 0, 0, 1});
    out.expect_max("covariance_two_point",
                   max_abs_diff(covariance(tape.constant(two)).value(), T({2, 2}, {0.5, -0.5, -0.5, 0.5})), 1e-12);

    const std::vector<V> same{tape.constant(T({3, 2}, {1, 2, 0, 1, 3, -1}))};
    out.expect_close("spa_identical_domains", spa_loss(std::span<const V>(same), std::span<const V>(same)).item(), 0.0,
                     1e-12);

    Discriminator<double> disc(4, 1);
    for (auto& prm : disc.parameters()) prm.value.values().setZero();
    const V lds = tape.constant(T::constant({3, 4}, 0.7));
    out.expect_close("adv_half_discriminator", adv_loss(tape, lds, lds, disc).item(), -2 * std::log(2.0), 1e-6);

    // Every target descriptor equidistant from every support descriptor.
    const V one = tape.constant(T::constant({2, 4}, 1.0));
    const V many = tape.constant(T::constant({10, 4}, 2.0));
    out.expect_close("msm_equal_similarity_k2_n4", msm_loss(one, many, 1, MsmConfig{2, 4}).item() / 2,
                     2 * std::log(4.0), 1e-6);
    out.expect_close("msm_equal_similarity_k3_n10", msm_loss(one, many, 1, MsmConfig{3, 10}).item() / 2,
                     3 * std::log(10.0), 1e-6);

    const std::vector<V> diag{tape.constant(T({2, 2}, {-1, 0, 1, 0}))};
    out.expect_close("rspa_diag_2_0", rspa_loss(std::span<const V>(diag)).item(), 2.0, 1e-6);

    const std::vector<Index> labels{0, 3};
    out.expect_close("cls_equal_scores_five_way",
                     cls_loss(tape.constant(T::constant({2, 5}, 0.4)), std::span<const Index>(labels)).item(),
                     std::log(5.0), 1e-12);
    const std::vector<Index> zero{0};
    out.expect_close("cls_single_class", cls_loss(tape.constant(T({1, 1}, {2.5})), std::span<const Index>(zero)).item(),
                     0.0, 0.0);
}

}  // namespace

std::vector<CheckResult> run_selftest_suite(std::uint64_t seed) {
    Collector out;
    Rng rng(derive_seed({seed, 0x5e1fULL}));
    primitive_oracles(out, rng);
    encoder_checks(out, rng);
    loss_oracles(out, rng);
    closed_forms(out);
    return out.take();
}

}  // namespace fsuda
