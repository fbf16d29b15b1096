#include "fsuda/verify.hpp"

#include "fsuda/alignment.hpp"
#include "fsuda/gradient_check.hpp"
#include "fsuda/ops.hpp"
#include "fsuda/simpattern.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <sstream>

namespace fsuda {

Tensor<double> random_tensor(Rng& rng, Shape shape, double lo, double hi) {
    Tensor<double> t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * uniform_real(rng);
    return t;
}

SyntheticSpec micro_dataset_spec(std::uint64_t seed) {
    SyntheticSpec s;
    s.train_classes = 3;
    s.val_classes = 1;
    s.test_classes = 2;
    s.samples = 6;
    s.height = 9;
    s.width = 9;
    s.seed = seed;
    return s;
}

EmbeddingConfig micro_embedding_config(std::uint64_t seed) {
    EmbeddingConfig c;
    c.in_height = 9;
    c.in_width = 9;
    c.blocks = 2;
    c.channels = 4;
    c.seed = seed;
    return c;
}

EpisodeSpec micro_episode_spec() {
    EpisodeSpec e;
    e.ways = 2;
    e.shots = 1;
    e.queries = 2;
    e.target_queries = 4;
    return e;
}

ObjectiveConfig micro_objective_config() {
    ObjectiveConfig c;
    c.scales = {3, 2, 1};
    c.adv_mode = AdversarialMode::kPlain;
    return c;
}

bool all_passed(const std::vector<CheckResult>& results) {
    return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.pass; });
}

std::string format_results(const std::vector<CheckResult>& results) {
    std::ostringstream os;
    for (const auto& r : results) {
        char line[256];
        std::snprintf(line, sizeof line, "%s %-36s value=%.3e tol=%.1e", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                      r.value, r.tolerance);
        os << line;
        if (!r.detail.empty()) os << "  " << r.detail;
        os << '\n';
    }
    return os.str();
}

namespace {

using T = Tensor<double>;
using V = Var<double>;
using Output = std::function<V(Tape<double>&)>;

// Builds an instance: registers parameters and returns a tensor-valued output.
using Builder = std::function<Output(Rng&, ParameterSet<double>&)>;

// Entries in [lo, hi] with magnitude at least `gap`, away from kinks at 0.
T away_from_zero(Rng& rng, Shape shape, double gap, double hi = 1.0) {
    T t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) {
        const double m = gap + (hi - gap) * uniform_real(rng);
        t[i] = uniform_real(rng) < 0.5 ? -m : m;
    }
    return t;
}

// Projects a tensor-valued output to a scalar with fixed random weights so
// every Jacobian entry contributes.
ScalarFunction project(Output out, std::uint64_t seed) {
    auto weights = std::make_shared<T>();
    return [out = std::move(out), weights, seed](Tape<double>& tape) {
        const V y = out(tape);
        if (y.size() == 1) return y;
        if (weights->shape() != y.shape()) {
            Rng rng(seed);
            *weights = random_tensor(rng, y.shape());
        }
        return sum(mul(y, tape.constant(*weights)));
    };
}

class GradSuite {
public:
    explicit GradSuite(const SuiteOptions& o) : opts_(o) {}

    void check(const std::string& name, const Builder& build, double corrupt = 1.0) {
        CheckResult r{name, true, 0, opts_.tolerance, {}};
        for (Index i = 0; i < opts_.instances; ++i) {
            const std::uint64_t seed = derive_seed({opts_.seed, std::hash<std::string>{}(name), static_cast<std::uint64_t>(i)});
            Rng rng(seed);
            ParameterSet<double> params;
            Output out = build(rng, params);
            record(r, i, gradient_check(project(std::move(out), seed ^ 0x5eedULL), params, step(corrupt)));
        }
        results_.push_back(r);
    }

    void check_sets(const std::string& name,
                    const std::function<ScalarFunction(Rng&, std::vector<ParameterSet<double>*>&)>& build) {
        CheckResult r{name, true, 0, opts_.tolerance, {}};
        for (Index i = 0; i < opts_.instances; ++i) {
            const std::uint64_t seed = derive_seed({opts_.seed, std::hash<std::string>{}(name), static_cast<std::uint64_t>(i)});
            Rng rng(seed);
            std::vector<ParameterSet<double>*> sets;
            const ScalarFunction f = build(rng, sets);
            record(r, i, gradient_check(f, sets, step(1.0)));
        }
        results_.push_back(r);
    }

    void add(CheckResult r) { results_.push_back(std::move(r)); }
    std::vector<CheckResult> take() { return std::move(results_); }
    const SuiteOptions& options() const { return opts_; }

private:
    GradCheckOptions step(double corrupt) const {
        GradCheckOptions g;
        g.step = opts_.step;
        g.corrupt_factor = corrupt;
        g.retry_above = 0.1 * opts_.tolerance;
        g.retry_steps = {opts_.step * 0.1, opts_.step * 0.01, opts_.step * 10};
        return g;
    }

    void record(CheckResult& r, Index instance, const GradCheckResult& g) {
        if (instance == 0) coords_ = retried_ = 0;
        coords_ += g.coordinates;
        retried_ += g.retried;
        if (instance == 0 || g.max_rel_error > r.value) {
            r.value = g.max_rel_error;
            worst_ = "worst " + g.worst_parameter + "[" + std::to_string(g.worst_index) + "] instance " +
                     std::to_string(instance);
        }
        r.detail = worst_ + ", " + std::to_string(coords_) + " coordinates, " + std::to_string(retried_) + " re-stepped";
        r.pass = r.value <= r.tolerance;
    }

    SuiteOptions opts_;
    std::vector<CheckResult> results_;
    Index coords_ = 0, retried_ = 0;
    std::string worst_;
};

V p(Tape<double>& t, ParameterSet<double>& ps, std::size_t i) { return t.param(ps[i]); }

// Moves freshly initialized parameters off the exact zeros of bias
// initialization. Biases become positive so that few ReLU units are dead:
// an all-zero descriptor sits on the discontinuity of x/|x|.
void perturb(ParameterSet<double>& params, Rng& rng) {
    for (auto& q : params) {
        const bool bias = q.name.ends_with(".bias");
        for (Index i = 0; i < q.value.size(); ++i)
            q.value[i] += bias ? 0.05 + 0.25 * uniform_real(rng) : 0.2 * uniform_real(rng) - 0.1;
    }
}

void primitive_checks(GradSuite& s) {
    s.check("matmul", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("a", random_tensor(rng, {3, 4}));
        ps.add("b", random_tensor(rng, {4, 2}));
        return [&ps](Tape<double>& t) { return matmul(p(t, ps, 0), p(t, ps, 1)); };
    });
    s.check("transpose", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("a", random_tensor(rng, {3, 4}));
        return [&ps](Tape<double>& t) { return transpose(p(t, ps, 0)); };
    });
    s.check("add", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("a", random_tensor(rng, {3, 4}));
        ps.add("b", random_tensor(rng, {3, 4}));
        return [&ps](Tape<double>& t) { return add(p(t, ps, 0), p(t, ps, 1)); };
    });
    s.check("sub", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("a", random_tensor(rng, {3, 4}));
        ps.add("b", random_tensor(rng, {3, 4}));
        return [&ps](Tape<double>& t) { return sub(p(t, ps, 0), p(t, ps, 1)); };
    });
    s.check("mul", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("a", random_tensor(rng, {3, 4}));
        ps.add("b", random_tensor(rng, {3, 4}));
        return [&ps](Tape<double>& t) { return mul(p(t, ps, 0), p(t, ps, 1)); };
    });
    s.check("scale", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("a", random_tensor(rng, {3, 4}));
        return [&ps](Tape<double>& t) { return scale(p(t, ps, 0), -1.7); };
    });
    s.check("add_scalar", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("a", random_tensor(rng, {3, 4}));
        return [&ps](Tape<double>& t) { return add_scalar(p(t, ps, 0), 0.3); };
    });
    s.check("scale_by", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("a", random_tensor(rng, {3, 4}));
        ps.add("s", random_tensor(rng, {1}));
        return [&ps](Tape<double>& t) { return scale_by(p(t, ps, 0), p(t, ps, 1)); };
    });
    s.check("add_channelwise", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {2, 3, 4}));
        ps.add("v", random_tensor(rng, {4}));
        return [&ps](Tape<double>& t) { return add_channelwise(p(t, ps, 0), p(t, ps, 1)); };
    });
    s.check("mul_channelwise", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {2, 3, 4}));
        ps.add("v", random_tensor(rng, {4}));
        return [&ps](Tape<double>& t) { return mul_channelwise(p(t, ps, 0), p(t, ps, 1)); };
    });
    s.check("relu", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", away_from_zero(rng, {3, 4}, 0.05));
        return [&ps](Tape<double>& t) { return relu(p(t, ps, 0)); };
    });
    s.check("sigmoid", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {3, 4}, -3, 3));
        return [&ps](Tape<double>& t) { return sigmoid(p(t, ps, 0)); };
    });
    s.check("log", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {3, 4}, 0.5, 2));
        return [&ps](Tape<double>& t) { return log(p(t, ps, 0)); };
    });
    s.check("exp", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {3, 4}, -2, 2));
        return [&ps](Tape<double>& t) { return exp(p(t, ps, 0)); };
    });
    s.check("clamp", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        T x = away_from_zero(rng, {3, 4}, 0.0, 1.0);
        for (Index i = 0; i < x.size(); ++i)
            if (std::abs(std::abs(x[i]) - 0.5) < 0.05) x[i] *= 0.5;
        ps.add("x", std::move(x));
        return [&ps](Tape<double>& t) { return clamp(p(t, ps, 0), -0.5, 0.5); };
    });
    s.check("sum", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {3, 4}));
        return [&ps](Tape<double>& t) { return sum(p(t, ps, 0)) * 0.7; };
    });
    s.check("mean", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {3, 4}));
        return [&ps](Tape<double>& t) { return mean(p(t, ps, 0)) * 0.7; };
    });
    s.check("row_sum", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {3, 4}));
        return [&ps](Tape<double>& t) { return row_sum(p(t, ps, 0)); };
    });
    s.check("col_mean", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {3, 4}));
        return [&ps](Tape<double>& t) { return col_mean(p(t, ps, 0)); };
    });
    s.check("sum_row_groups", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {6, 3}));
        return [&ps](Tape<double>& t) { return sum_row_groups(p(t, ps, 0), 3); };
    });
    s.check("trace", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {3, 3}));
        return [&ps](Tape<double>& t) { return trace(p(t, ps, 0)) * 1.3; };
    });
    s.check("frobenius_squared", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {3, 4}));
        return [&ps](Tape<double>& t) { return frobenius_squared(p(t, ps, 0)); };
    });
    s.check("reshape", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {3, 4}));
        return [&ps](Tape<double>& t) { return reshape(p(t, ps, 0), {2, 6}); };
    });
    s.check("slice", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {4, 3}));
        return [&ps](Tape<double>& t) { return slice(p(t, ps, 0), 1, 2); };
    });
    s.check("slice_cols", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {3, 5}));
        return [&ps](Tape<double>& t) { return slice_cols(p(t, ps, 0), 1, 3); };
    });
    s.check("concat", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("a", random_tensor(rng, {2, 3}));
        ps.add("b", random_tensor(rng, {3, 3}));
        return [&ps](Tape<double>& t) { return concat(std::vector<V>{p(t, ps, 0), p(t, ps, 1), p(t, ps, 0)}); };
    });
    s.check("gather_cols", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {3, 5}));
        Matrix<Index> idx(3, 2);
        for (Index r = 0; r < 3; ++r)
            for (Index c = 0; c < 2; ++c) idx(r, c) = static_cast<Index>(uniform_index(rng, 5));
        return [&ps, idx](Tape<double>& t) { return gather_cols(p(t, ps, 0), idx); };
    });
    s.check("mask", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {3, 4}));
        T gate({3, 4});
        for (Index i = 0; i < gate.size(); ++i) gate[i] = uniform_real(rng) < 0.5 ? 0.0 : 1.0;
        return [&ps, gate](Tape<double>& t) { return mask(p(t, ps, 0), gate); };
    });
    struct ConvCase {
        const char* name;
        Index stride, padding;
    };
    for (const ConvCase c : {ConvCase{"conv2d_s1_p0", 1, 0}, ConvCase{"conv2d_s1_p1", 1, 1}, ConvCase{"conv2d_s2_p1", 2, 1}}) {
        s.check(c.name, [c](Rng& rng, ParameterSet<double>& ps) -> Output {
            ps.add("x", random_tensor(rng, {2, 5, 5, 2}));
            ps.add("w", random_tensor(rng, {3, 3, 2, 3}));
            return [&ps, c](Tape<double>& t) { return conv2d(p(t, ps, 0), p(t, ps, 1), c.stride, c.padding); };
        });
    }
    s.check("max_pool_ceil", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {2, 5, 5, 2}));
        return [&ps](Tape<double>& t) { return pool2d(p(t, ps, 0), PoolMode::kMax, PoolGeometry{2, 2, true}); };
    });
    s.check("max_pool_floor", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {2, 4, 5, 2}));
        return [&ps](Tape<double>& t) { return pool2d(p(t, ps, 0), PoolMode::kMax, PoolGeometry{2, 2, false}); };
    });
    s.check("avg_pool_ceil", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {2, 5, 5, 2}));
        return [&ps](Tape<double>& t) { return pool2d(p(t, ps, 0), PoolMode::kAvg, PoolGeometry{2, 2, true}); };
    });
    s.check("adaptive_avg_pool2d", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {2, 5, 5, 2}));
        return [&ps](Tape<double>& t) {
            return concat(std::vector<V>{reshape(adaptive_avg_pool2d(p(t, ps, 0), 2, 2), {8, 2}),
                                         reshape(adaptive_avg_pool2d(p(t, ps, 0), 3, 3), {18, 2})});
        };
    });
    s.check("l2_normalize_rows", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {3, 4}));
        return [&ps](Tape<double>& t) { return l2_normalize_rows(p(t, ps, 0)); };
    });
    s.check("log_softmax_rows", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {3, 4}, -3, 3));
        return [&ps](Tape<double>& t) { return log_softmax_rows(p(t, ps, 0)); };
    });
    s.check("logsumexp_rows", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("x", random_tensor(rng, {3, 4}, -3, 3));
        return [&ps](Tape<double>& t) { return logsumexp_rows(p(t, ps, 0)); };
    });
    // The analytic gradient is the true one times -1 by construction.
    s.check(
        "scale_gradient",
        [](Rng& rng, ParameterSet<double>& ps) -> Output {
            ps.add("x", random_tensor(rng, {3, 4}));
            return [&ps](Tape<double>& t) { return scale_gradient(p(t, ps, 0), -1.0); };
        },
        -1.0);
}

void encoder_checks(GradSuite& s) {
    s.check("gaussian_smooth", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("v", random_tensor(rng, {2, 3, 3, 4}));
        return [&ps](Tape<double>& t) { return gaussian_smooth(p(t, ps, 0), 0.8); };
    });
    s.check("cosine_matrix", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("q", random_tensor(rng, {9, 4}));
        ps.add("s", random_tensor(rng, {9, 4}));
        return [&ps](Tape<double>& t) { return cosine_matrix(p(t, ps, 0), p(t, ps, 1)); };
    });
    s.check("topk_sparsify", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("m", random_tensor(rng, {9, 9}));
        return [&ps](Tape<double>& t) { return topk_sparsify(p(t, ps, 0), 3, 9); };
    });
    s.check("encode_patterns", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("sims", random_tensor(rng, {18, 9}));
        return [&ps](Tape<double>& t) { return encode_patterns(p(t, ps, 0), 3, 3, 0.8); };
    });
    s.check("similarity_patterns", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("query_lds", random_tensor(rng, {18, 4}));
        ps.add("support_lds", random_tensor(rng, {18, 4}));
        return [&ps](Tape<double>& t) {
            return similarity_patterns(p(t, ps, 0), p(t, ps, 1), 3, 3, 1, EncoderConfig{});
        };
    });
    s.check("class_scores", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("patterns", random_tensor(rng, {4, 18}));
        return [&ps](Tape<double>& t) { return class_scores(p(t, ps, 0), 2); };
    });
    s.check("cls_loss", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("scores", random_tensor(rng, {4, 2}, -3, 3));
        std::vector<Index> labels;
        for (int i = 0; i < 4; ++i) labels.push_back(static_cast<Index>(uniform_index(rng, 2)));
        return [&ps, labels](Tape<double>& t) { return cls_loss(p(t, ps, 0), std::span<const Index>(labels)); };
    });
    s.check("extract_lds", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("maps", random_tensor(rng, {2, 3, 3, 4}));
        return [&ps](Tape<double>& t) { return extract_lds(p(t, ps, 0)); };
    });
    s.check("multiscale_lds", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("maps", random_tensor(rng, {2, 3, 3, 4}));
        return [&ps](Tape<double>& t) { return multiscale_lds(p(t, ps, 0), {3, 2, 1}); };
    });
    s.check_sets("embedding_forward", [](Rng& rng, std::vector<ParameterSet<double>*>& sets) -> ScalarFunction {
        auto net = std::make_shared<Embedding<double>>(micro_embedding_config(rng()));
        perturb(net->parameters(), rng);
        sets.push_back(&net->parameters());
        const T images = random_tensor(rng, {2, 9, 9, 1}, 0, 1);
        return project([net, images](Tape<double>& t) { return net->forward(t, images); }, rng());
    });
}

void loss_checks(GradSuite& s) {
    s.check("covariance", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("patterns", random_tensor(rng, {4, 9}));
        return [&ps](Tape<double>& t) { return covariance(p(t, ps, 0)); };
    });
    s.check("spa_loss", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        for (const char* n : {"src0", "src1", "tgt0", "tgt1"}) ps.add(n, random_tensor(rng, {4, 9}));
        return [&ps](Tape<double>& t) {
            const std::vector<V> src{p(t, ps, 0), p(t, ps, 1)}, tgt{p(t, ps, 2), p(t, ps, 3)};
            return spa_loss(std::span<const V>(src), std::span<const V>(tgt));
        };
    });
    s.check("rspa_loss", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        for (const char* n : {"set0", "set1"}) ps.add(n, random_tensor(rng, {4, 9}));
        return [&ps](Tape<double>& t) {
            const std::vector<V> sets{p(t, ps, 0), p(t, ps, 1)};
            return rspa_loss(std::span<const V>(sets));
        };
    });
    s.check_sets("adv_loss", [](Rng& rng, std::vector<ParameterSet<double>*>& sets) -> ScalarFunction {
        auto disc = std::make_shared<Discriminator<double>>(4, rng());
        perturb(disc->parameters(), rng);
        auto lds = std::make_shared<ParameterSet<double>>();
        lds->add("source_lds", random_tensor(rng, {9, 4}));
        lds->add("target_lds", random_tensor(rng, {9, 4}));
        sets = {lds.get(), &disc->parameters()};
        return [disc, lds](Tape<double>& t) {
            return adv_loss(t, t.param((*lds)[0]), t.param((*lds)[1]), *disc, AdversarialMode::kPlain);
        };
    });
    s.check("msm_loss", [](Rng& rng, ParameterSet<double>& ps) -> Output {
        ps.add("target_lds", random_tensor(rng, {9, 4}));
        ps.add("multiscale_lds", random_tensor(rng, {14, 4}));
        return [&ps](Tape<double>& t) { return msm_loss(p(t, ps, 0), p(t, ps, 1), 1, MsmConfig{3, 10}); };
    });
}

// F keeps its gradient and D receives the negated one under reversal.
CheckResult reversal_contract(const SuiteOptions& opts) {
    CheckResult r{"adv_reversal_contract", true, 0, 1e-12, {}};
    for (Index i = 0; i < opts.instances; ++i) {
        Rng rng(derive_seed({opts.seed, 0xadfULL, static_cast<std::uint64_t>(i)}));
        Discriminator<double> disc(4, rng());
        ParameterSet<double> lds;
        lds.add("source_lds", random_tensor(rng, {9, 4}));
        lds.add("target_lds", random_tensor(rng, {9, 4}));
        std::vector<T> grads[2];
        double values[2];
        for (int mode = 0; mode < 2; ++mode) {
            lds.zero_grad();
            disc.parameters().zero_grad();
            Tape<double> tape;
            const V loss = adv_loss(tape, tape.param(lds[0]), tape.param(lds[1]), disc,
                                    mode ? AdversarialMode::kReversal : AdversarialMode::kPlain);
            tape.backward(loss);
            values[mode] = loss.item();
            for (const auto& q : lds) grads[mode].push_back(q.grad);
            for (const auto& q : disc.parameters()) grads[mode].push_back(q.grad);
        }
        double err = std::abs(values[0] - values[1]);
        for (std::size_t g = 0; g < grads[0].size(); ++g) {
            const double sign = g < lds.size() ? 1.0 : -1.0;
            err = std::max(err, (grads[1][g].values() - sign * grads[0][g].values()).cwiseAbs().maxCoeff());
        }
        r.value = std::max(r.value, err);
    }
    r.pass = r.value <= r.tolerance;
    return r;
}

void objective_checks(GradSuite& s) {
    const SuiteOptions& opts = s.options();
    auto dataset = std::make_shared<Dataset>(generate_synthetic(micro_dataset_spec(opts.seed)));
    auto objective_case = [dataset](LossWeights w) {
        return [dataset, w](Rng& rng, std::vector<ParameterSet<double>*>& sets) -> ScalarFunction {
            auto net = std::make_shared<Embedding<double>>(micro_embedding_config(rng()));
            auto disc = std::make_shared<Discriminator<double>>(4, rng());
            perturb(net->parameters(), rng);
            perturb(disc->parameters(), rng);
            auto episode = std::make_shared<Episode>(
                sample_episode(*dataset, Split::kTrain, micro_episode_spec(), rng, EpisodeMode::kTrain));
            ObjectiveConfig cfg = micro_objective_config();
            cfg.weights = w;
            sets = {&net->parameters(), &disc->parameters()};
            return [=](Tape<double>& t) { return total_objective(t, *episode, *dataset, *net, *disc, cfg).total; };
        };
    };
    s.check_sets("objective_cls_only", objective_case({0, 0, 0}));
    s.check_sets("objective_spa_term", objective_case({1, 0, 0}));
    s.check_sets("objective_adv_term", objective_case({0, 1, 0}));
    s.check_sets("objective_msm_term", objective_case({0, 0, 1}));
    s.check_sets("objective_total", objective_case(LossWeights{}));
}

}  // namespace

std::vector<CheckResult> run_gradcheck_suite(const SuiteOptions& options) {
    GradSuite s(options);
    primitive_checks(s);
    encoder_checks(s);
    loss_checks(s);
    s.add(reversal_contract(options));
    objective_checks(s);
    return s.take();
}

}  // namespace fsuda
