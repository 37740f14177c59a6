#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "sabnn/fd.hpp"
#include "sabnn/rng.hpp"
#include "sabnn/tensor.hpp"

namespace sabnn {

struct ReliabilityBin {
    double lo = 0.0;
    double hi = 0.0;
    long count = 0;
    double mean_conf = 0.0;
    double accuracy = 0.0;
    double gap = 0.0;
};

struct ReliabilityTable {
    std::vector<ReliabilityBin> bins;
    long total() const;
};

struct EvalReport {
    double accuracy = 0.0;
    double nll = 0.0;
    double ece = 0.0;
    ReliabilityTable reliability;
    int n_ensemble_samples = 0;
    std::optional<double> sharpness;
    std::optional<std::vector<double>> eigenvalues;  // descending
};

// Row-wise numerically stable softmax.
Mat softmax_rows(const Mat& logits);

// One posterior draw: per-example class probabilities for the given batch.
using ModelSampler = std::function<Mat(const Mat& features, Rng& rng)>;

// Arithmetic mean of per-model softmax probabilities, reduced in fixed
// sample-index order.
Mat ensemble_predict(const ModelSampler& sampler, const Mat& features, int n_samples, Rng& rng);

// Fraction with argmax(prob) == label; argmax ties break to the lowest
// class index.
double accuracy(const Mat& probs, const VecI& labels);

// Mean -log p[label], probabilities floored at 1e-12.
double nll(const Mat& probs, const VecI& labels);

// Equal-width right-closed confidence bins over [0, 1].
std::pair<double, ReliabilityTable> ece(const Mat& probs, const VecI& labels, int n_bins = 20);

// header 'bin_lo,bin_hi,count,mean_conf,accuracy,gap', >= 9 significant digits
void write_reliability_csv(std::ostream& out, const ReliabilityTable& table);

using MatVecFn = std::function<Vec(const Vec&)>;

// Top-k eigenvalues (algebraically largest) of a symmetric operator by
// shifted power iteration with Gram-Schmidt deflation.
std::vector<double> top_eigenvalues(const MatVecFn& apply, Eigen::Index dim, int k_eigs, int iters,
                                    Rng& rng);

// Same but for the Hessian of a loss, via finite-difference HVPs.
std::vector<double> top_eigenvalues(const LossGradFn& loss_grad, const Vec& params, int k_eigs,
                                    int iters, Rng& rng, double fd_step = 1e-4);

}  // namespace sabnn
