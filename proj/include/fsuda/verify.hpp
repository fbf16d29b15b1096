#ifndef FSUDA_VERIFY_HPP
#define FSUDA_VERIFY_HPP

#include "fsuda/embedding.hpp"
#include "fsuda/episode.hpp"
#include "fsuda/objective.hpp"
#include "fsuda/random.hpp"
#include "fsuda/synthetic.hpp"
#include "fsuda/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fsuda {

// Reference implementations written with explicit loops and no shared code
// with the differentiable ops. Double precision, row-major buffers.
namespace oracle {

using Mat = Tensor<double>;

Mat matmul(const Mat& a, const Mat& b);
/// x [B,H,W,Ci], w [kh,kw,Ci,Co], zero padding.
Mat conv2d(const Mat& x, const Mat& w, Index stride, Index padding);
Mat cosine(const Mat& q, const Mat& s);
/// Keeps the k largest entries per row within each column block; ties to the lowest index.
Mat topk(const Mat& m, Index k, Index block);
/// sim [H*W x J] to a pattern of length J.
std::vector<double> encode_pattern(const Mat& sim, Index height, Index width, double sigma);
double cross_entropy(const Mat& scores, const std::vector<Index>& labels);
/// Mean first, then the sum of outer products of centered rows over n-1.
Mat covariance(const Mat& patterns);
double spa(const std::vector<Mat>& source, const std::vector<Mat>& target);
double rspa(const std::vector<Mat>& sets);
/// Mean over source of log(1-p) plus mean over target of log p, p clamped.
double adv(const std::vector<double>& source_prob, const std::vector<double>& target_prob);
/// Cosine similarities, full sort per row, direct log-softmax sums.
double msm(const Mat& target_lds, const Mat& support_lds, Index target_queries, Index k, Index n);

}  // namespace oracle

struct CheckResult {
    std::string name;
    bool pass = false;
    double value = 0;
    double tolerance = 0;
    std::string detail;
};

struct SuiteOptions {
    Index instances = 20;
    std::uint64_t seed = 20240917;
    double tolerance = 1e-3;
    double step = 1e-5;
};

/// Finite-difference checks of every differentiable primitive, each loss
/// term and the full episode objective on micro-instances.
std::vector<CheckResult> run_gradcheck_suite(const SuiteOptions& options = {});

/// Oracle equivalence and closed-form checks.
std::vector<CheckResult> run_selftest_suite(std::uint64_t seed = 20240917);

bool all_passed(const std::vector<CheckResult>& results);
std::string format_results(const std::vector<CheckResult>& results);

// Micro-instance used by the objective checks: 9x9 images embedded to 3x3x4
// maps, 2-way 1-shot episodes, multi-scale grids 3x3/2x2/1x1.
SyntheticSpec micro_dataset_spec(std::uint64_t seed);
EmbeddingConfig micro_embedding_config(std::uint64_t seed);
EpisodeSpec micro_episode_spec();
ObjectiveConfig micro_objective_config();

/// Tensor with i.i.d. uniform entries in [lo, hi).
Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0);

}  // namespace fsuda

#endif  // FSUDA_VERIFY_HPP
