#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "sabnn/data.hpp"
#include "sabnn/flatness.hpp"
#include "sabnn/mlp.hpp"
#include "sabnn/posterior.hpp"

namespace sabnn {

enum class Method { Sgvb, SgvbLrt, Sgld, Swag, SwagDiag, McDropout, DeepEnsemble };
enum class LrSchedule { Constant, Cosine };

struct TrainConfig {
    Method method = Method::Sgvb;
    bool flat = false;
    GeometryKind geometry = GeometryKind::Identity;
    double rho = 0.05;
    double lambda = -1.0;  // < 0 means the default lambda = n
    double learning_rate = 0.05;
    int epochs = 200;
    int batch_size = 64;
    std::uint64_t seed = 1;
    double prior_tau = 1.0;  // <= 0 disables the prior/L2 term
    double sgld_temperature = -1.0;  // < 0 means the default 1/n
    int swag_collect_start_epoch = -1;  // < 0 means 54% of epochs
    int swag_rank = 20;
    int ensemble_size = 3;
    double keep_prob = 0.9;
    int mc_train_samples = 1;
    LrSchedule schedule = LrSchedule::Constant;
    long max_steps = 0;  // 0 = no limit; testing hook for step-exact comparisons

    double effective_lambda(Eigen::Index n) const {
        return lambda < 0.0 ? static_cast<double>(n) : lambda;
    }
    double effective_temperature(Eigen::Index n) const {
        return sgld_temperature < 0.0 ? 1.0 / static_cast<double>(n) : sgld_temperature;
    }
    int effective_swag_start(int epochs_total) const {
        if (swag_collect_start_epoch >= 0) return swag_collect_start_epoch;
        return static_cast<int>(std::llround(0.54 * epochs_total));
    }
};

// Streaming SWAG statistics over collected snapshots.
struct SwagStats {
    long count = 0;
    Vec mean;
    Vec mean_sq;
    std::deque<Vec> deviations;  // last `rank` (snapshot - running mean)
    int rank = 0;
    Vec final_state;  // last SGD iterate, for trajectory comparisons

    void collect(const Vec& snapshot, bool keep_deviation);
    Vec variance() const { return (mean_sq - mean.cwiseProduct(mean)).cwiseMax(0.0); }
};

struct ParticleSet {
    std::vector<Vec> particles;
    std::vector<long> steps;
    Vec final_state;
};

// Gradient for one SAM step: gradient at `current` when flat is off or
// rho = 0, otherwise the gradient re-evaluated at the perturbed point.
Vec sam_step(const LossGradFn& loss_grad, const Vec& current, double rho, const Vec& t_diag,
             bool flat);

GaussianPosterior train_sgvb(const MlpSpec& spec, const TrainConfig& cfg, const Dataset& data,
                             Rng& rng, bool local_reparam);

ParticleSet train_sgld(const MlpSpec& spec, const TrainConfig& cfg, const Dataset& data, Rng& rng,
                       bool flat);

SwagStats train_swag(const MlpSpec& spec, const TrainConfig& cfg, const Dataset& data, Rng& rng,
                     bool flat, bool diag_only);

Vec swag_sample(const SwagStats& stats, Rng& rng, bool diag_only);

FlatParams train_mc_dropout(const MlpSpec& spec, const TrainConfig& cfg, const Dataset& data,
                            Rng& rng, bool flat);

std::vector<FlatParams> train_deep_ensemble(const MlpSpec& spec, const TrainConfig& cfg,
                                            const Dataset& data, Rng& rng, bool flat);

}  // namespace sabnn
