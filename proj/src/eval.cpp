#include "sabnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sabnn/error.hpp"

namespace sabnn {

long ReliabilityTable::total() const {
    long n = 0;
    for (const auto& b : bins) n += b.count;
    return n;
}

Mat softmax_rows(const Mat& logits) {
    Mat p = logits;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double m = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - m).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

Mat ensemble_predict(const ModelSampler& sampler, const Mat& features, int n_samples, Rng& rng) {
    check(n_samples >= 1, "ensemble_predict: n_samples must be >= 1");
    check(features.rows() > 0, "ensemble_predict: empty dataset");
    Mat sum;
    for (int s = 0; s < n_samples; ++s) {
        Mat p = sampler(features, rng);
        check(p.rows() == features.rows(), "ensemble_predict: sampler row count mismatch");
        if (s == 0) {
            sum = p;
        } else {
            sum += p;
        }
    }
    return sum / static_cast<double>(n_samples);
}

namespace {
int argmax_lowest(const Mat& probs, Eigen::Index row) {
    int best = 0;
    for (int j = 1; j < probs.cols(); ++j) {
        if (probs(row, j) > probs(row, best)) best = j;
    }
    return best;
}
}  // namespace

double accuracy(const Mat& probs, const VecI& labels) {
    check(probs.rows() == labels.size(), "accuracy: row/label count mismatch");
    long correct = 0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        if (argmax_lowest(probs, i) == labels(i)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(probs.rows());
}

double nll(const Mat& probs, const VecI& labels) {
    check(probs.rows() == labels.size(), "nll: row/label count mismatch");
    double total = 0.0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        total += -std::log(std::max(probs(i, labels(i)), 1e-12));
    }
    return total / static_cast<double>(probs.rows());
}

std::pair<double, ReliabilityTable> ece(const Mat& probs, const VecI& labels, int n_bins) {
    check(n_bins >= 1, "ece: n_bins must be >= 1");
    check(probs.rows() == labels.size(), "ece: row/label count mismatch");
    ReliabilityTable table;
    table.bins.resize(static_cast<std::size_t>(n_bins));
    for (int b = 0; b < n_bins; ++b) {
        table.bins[static_cast<std::size_t>(b)].lo = static_cast<double>(b) / n_bins;
        table.bins[static_cast<std::size_t>(b)].hi = static_cast<double>(b + 1) / n_bins;
    }
    std::vector<double> conf_sum(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<long> hit(static_cast<std::size_t>(n_bins), 0);
    const Eigen::Index n = probs.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        const int pred = argmax_lowest(probs, i);
        const double conf = probs(i, pred);
        // right-closed bins: confidence 1.0 lands in the last bin
        int b = static_cast<int>(std::ceil(conf * n_bins)) - 1;
        b = std::clamp(b, 0, n_bins - 1);
        auto& bin = table.bins[static_cast<std::size_t>(b)];
        bin.count += 1;
        conf_sum[static_cast<std::size_t>(b)] += conf;
        if (pred == labels(i)) hit[static_cast<std::size_t>(b)] += 1;
    }
    double e = 0.0;
    for (int b = 0; b < n_bins; ++b) {
        auto& bin = table.bins[static_cast<std::size_t>(b)];
        if (bin.count == 0) continue;
        bin.mean_conf = conf_sum[static_cast<std::size_t>(b)] / static_cast<double>(bin.count);
        bin.accuracy = static_cast<double>(hit[static_cast<std::size_t>(b)]) /
                       static_cast<double>(bin.count);
        bin.gap = std::abs(bin.accuracy - bin.mean_conf);
        e += (static_cast<double>(bin.count) / static_cast<double>(n)) * bin.gap;
    }
    return {e, table};
}

void write_reliability_csv(std::ostream& out, const ReliabilityTable& table) {
    out << "bin_lo,bin_hi,count,mean_conf,accuracy,gap\n";
    char buf[256];
    for (const auto& b : table.bins) {
        std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%ld,%.12g,%.12g,%.12g\n", b.lo, b.hi, b.count,
                      b.mean_conf, b.accuracy, b.gap);
        out << buf;
    }
}

std::vector<double> top_eigenvalues(const MatVecFn& apply, Eigen::Index dim, int k_eigs, int iters,
                                    Rng& rng) {
    check(k_eigs >= 1, "top_eigenvalues: k_eigs must be >= 1");
    check(iters >= 10, "top_eigenvalues: iters must be >= 10");
    check(dim >= k_eigs, "top_eigenvalues: dimension smaller than k_eigs");

    auto random_unit = [&]() {
        Vec v(dim);
        for (Eigen::Index i = 0; i < dim; ++i) v(i) = rng.normal();
        return Vec(v / v.norm());
    };

    // spectral-radius estimate so a positive shift makes the dominant
    // eigenvalue of H + sI the algebraically largest
    Vec v = random_unit();
    double radius = 0.0;
    for (int i = 0; i < 50; ++i) {
        Vec w = apply(v);
        const double nw = w.norm();
        if (nw < 1e-300) break;
        radius = std::abs(v.dot(w));
        v = w / nw;
    }
    const double shift = radius + 1.0;

    std::vector<Vec> basis;
    auto project_out = [&](Vec& x) {
        for (const Vec& u : basis) x -= u.dot(x) * u;
    };

    std::vector<double> eigs;
    for (int e = 0; e < k_eigs; ++e) {
        Vec x = random_unit();
        project_out(x);
        check(x.norm() > 1e-12, "top_eigenvalues: degenerate start vector");
        x /= x.norm();
        double prev = 0.0;
        double lambda = 0.0;
        for (int it = 0; it < iters; ++it) {
            Vec w = apply(x) + shift * x;
            project_out(w);
            project_out(w);  // second pass keeps the deflation basis orthogonal
            const double nw = w.norm();
            if (nw < 1e-300) break;
            w /= nw;
            const double ray = w.dot(apply(w)) + shift;
            lambda = ray - shift;
            x = w;
            if (it > 0 && std::abs(ray - prev) <= 1e-13 * std::max(1.0, std::abs(ray))) {
                prev = ray;
                break;
            }
            prev = ray;
        }
        eigs.push_back(lambda);
        basis.push_back(x);
    }
    std::sort(eigs.begin(), eigs.end(), std::greater<double>());
    return eigs;
}

std::vector<double> top_eigenvalues(const LossGradFn& loss_grad, const Vec& params, int k_eigs,
                                    int iters, Rng& rng, double fd_step) {
    auto grad = [&](const Vec& x) { return loss_grad(x).second; };
    auto apply = [&, params](const Vec& v) {
        return hessian_vector_product(grad, params, v, fd_step);
    };
    return top_eigenvalues(apply, params.size(), k_eigs, iters, rng);
}

}  // namespace sabnn
