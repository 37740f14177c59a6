#pragma once

#include "sabnn/mlp.hpp"

namespace sabnn {

inline constexpr double kLogSigmaMin = -20.0;
inline constexpr double kLogSigmaMax = 3.0;

// Diagonal Gaussian over the flat parameter vector; sigma = exp(log_sigma)
// with log_sigma clamped to [-20, 3].
struct GaussianPosterior {
    Vec mu;
    Vec log_sigma;
    std::vector<LayerSlice> layout;

    Vec sigma() const {
        return log_sigma.array().min(kLogSigmaMax).max(kLogSigmaMin).exp().matrix();
    }
    void clamp_log_sigma() {
        log_sigma = log_sigma.array().min(kLogSigmaMax).max(kLogSigmaMin).matrix();
    }
};

struct PriorSpec {
    double tau = 1.0;  // N(0, tau^2 I)
};

struct ReparamSample {
    FlatParams params;
    Vec eps;
};

// theta = mu + sigma .* eps, eps ~ N(0, I); eps is returned so callers can
// hold it fixed across the perturb/update pair of evaluations.
ReparamSample sample_weights_reparam(const GaussianPosterior& posterior, Rng& rng);

// KL( N(mu, diag sigma^2) || N(0, tau^2 I) ), closed form.
double kl_diag_gaussian(const GaussianPosterior& posterior, const PriorSpec& prior);

// Gradients of the KL w.r.t. mu and log_sigma.
void kl_diag_gaussian_grad(const GaussianPosterior& posterior, const PriorSpec& prior,
                           Vec* d_mu, Vec* d_log_sigma);

// Per-layer pre-activation noise for the local reparameterization trick.
struct LrtNoise {
    std::vector<Mat> eps;  // one batch x out matrix per layer
};
LrtNoise draw_lrt_noise(const MlpSpec& spec, Eigen::Index batch, Rng& rng);

// Builds the LRT forward pass on a tape from explicit mu / log_sigma
// vectors. mu_nodes / ls_nodes receive per-slice leaves (W, b per layer).
Tape::NodeId build_lrt(Tape& tape, const MlpSpec& spec, const Vec& mu, const Vec& log_sigma,
                       const std::vector<LayerSlice>& layout, const Mat& batch,
                       const LrtNoise& noise, std::vector<Tape::NodeId>* mu_nodes = nullptr,
                       std::vector<Tape::NodeId>* ls_nodes = nullptr);

// Stochastic logits: per layer the pre-activation is drawn from its induced
// Gaussian, mean x*mu_W + mu_b and variance (x.^2)*(sigma_W.^2) + sigma_b.^2.
Mat local_reparam_forward(const GaussianPosterior& posterior, const MlpSpec& spec, const Mat& batch,
                          Rng& rng);

}  // namespace sabnn
