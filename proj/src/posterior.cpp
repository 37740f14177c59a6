#include "sabnn/posterior.hpp"

#include <cmath>

namespace sabnn {

namespace {

Mat slice_weight(const Vec& values, const LayerSlice& s) {
    Mat w(s.in, s.out);
    for (int i = 0; i < s.in; ++i)
        for (int j = 0; j < s.out; ++j) w(i, j) = values(s.w_offset + i * s.out + j);
    return w;
}

Mat slice_bias(const Vec& values, const LayerSlice& s) {
    Mat b(1, s.out);
    for (int j = 0; j < s.out; ++j) b(0, j) = values(s.b_offset + j);
    return b;
}

}  // namespace

ReparamSample sample_weights_reparam(const GaussianPosterior& posterior, Rng& rng) {
    ReparamSample out;
    out.eps = Vec(posterior.mu.size());
    for (Eigen::Index i = 0; i < out.eps.size(); ++i) out.eps(i) = rng.normal();
    out.params.layout = posterior.layout;
    out.params.values = posterior.mu + posterior.sigma().cwiseProduct(out.eps);
    return out;
}

double kl_diag_gaussian(const GaussianPosterior& posterior, const PriorSpec& prior) {
    check(prior.tau > 0.0, "kl_diag_gaussian: tau must be positive");
    const Vec sigma = posterior.sigma();
    const double tau2 = prior.tau * prior.tau;
    double kl = 0.0;
    for (Eigen::Index j = 0; j < posterior.mu.size(); ++j) {
        const double s2 = sigma(j) * sigma(j);
        const double m2 = posterior.mu(j) * posterior.mu(j);
        kl += (s2 + m2) / tau2 - 1.0 - 2.0 * std::log(sigma(j) / prior.tau);
    }
    return 0.5 * kl;
}

void kl_diag_gaussian_grad(const GaussianPosterior& posterior, const PriorSpec& prior,
                           Vec* d_mu, Vec* d_log_sigma) {
    const Vec sigma = posterior.sigma();
    const double tau2 = prior.tau * prior.tau;
    if (d_mu) *d_mu = posterior.mu / tau2;
    if (d_log_sigma) {
        *d_log_sigma = (sigma.array().square() / tau2 - 1.0).matrix();
    }
}

LrtNoise draw_lrt_noise(const MlpSpec& spec, Eigen::Index batch, Rng& rng) {
    LrtNoise noise;
    for (int l = 0; l < spec.n_layers(); ++l) {
        Mat e(batch, spec.widths[static_cast<std::size_t>(l) + 1]);
        for (Eigen::Index i = 0; i < e.rows(); ++i)
            for (Eigen::Index j = 0; j < e.cols(); ++j) e(i, j) = rng.normal();
        noise.eps.push_back(std::move(e));
    }
    return noise;
}

Tape::NodeId build_lrt(Tape& tape, const MlpSpec& spec, const Vec& mu, const Vec& log_sigma,
                       const std::vector<LayerSlice>& layout, const Mat& batch,
                       const LrtNoise& noise, std::vector<Tape::NodeId>* mu_nodes,
                       std::vector<Tape::NodeId>* ls_nodes) {
    spec.validate();
    check(batch.cols() == spec.input_dim(), "build_lrt: batch width mismatch");
    check(noise.eps.size() == static_cast<std::size_t>(spec.n_layers()),
          "build_lrt: noise layer count mismatch");
    const Vec ls_clamped = log_sigma.array().min(kLogSigmaMax).max(kLogSigmaMin).matrix();
    Tape::NodeId h = tape.leaf(batch);
    const int L = spec.n_layers();
    for (int l = 0; l < L; ++l) {
        const LayerSlice& s = layout[static_cast<std::size_t>(l)];
        Tape::NodeId mw = tape.leaf(slice_weight(mu, s));
        Tape::NodeId mb = tape.leaf(slice_bias(mu, s));
        Tape::NodeId lw = tape.leaf(slice_weight(ls_clamped, s));
        Tape::NodeId lb = tape.leaf(slice_bias(ls_clamped, s));
        if (mu_nodes) {
            mu_nodes->push_back(mw);
            mu_nodes->push_back(mb);
        }
        if (ls_nodes) {
            ls_nodes->push_back(lw);
            ls_nodes->push_back(lb);
        }
        Tape::NodeId mean = tape.add_bias(tape.matmul(h, mw), mb);
        Tape::NodeId var = tape.add_bias(tape.matmul(tape.square(h), tape.square(tape.exp(lw))),
                                         tape.square(tape.exp(lb)));
        Tape::NodeId noisy = tape.add(mean, tape.mul_const(tape.sqrt(var),
                                                           noise.eps[static_cast<std::size_t>(l)]));
        h = noisy;
        if (l + 1 < L) {
            h = (spec.activation == Activation::Relu) ? tape.relu(h) : tape.tanh(h);
        }
    }
    return h;
}

Mat local_reparam_forward(const GaussianPosterior& posterior, const MlpSpec& spec, const Mat& batch,
                          Rng& rng) {
    LrtNoise noise = draw_lrt_noise(spec, batch.rows(), rng);
    Tape tape;
    return tape.value(build_lrt(tape, spec, posterior.mu, posterior.log_sigma, posterior.layout,
                                batch, noise));
}

}  // namespace sabnn
