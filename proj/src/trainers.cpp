#include "sabnn/trainers.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace sabnn {

namespace {

struct Batcher {
    const Dataset& data;
    int batch_size;
    std::vector<Eigen::Index> order;

    Batcher(const Dataset& d, int bs) : data(d), batch_size(std::max(1, bs)) {
        order.resize(static_cast<std::size_t>(d.size()));
        for (Eigen::Index i = 0; i < d.size(); ++i) order[static_cast<std::size_t>(i)] = i;
    }

    void shuffle(Rng& rng) {
        for (Eigen::Index i = data.size() - 1; i > 0; --i) {
            const auto j = static_cast<Eigen::Index>(
                rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }
    }

    int n_batches() const {
        return static_cast<int>((data.size() + batch_size - 1) / batch_size);
    }

    void batch(int b, Mat* X, VecI* y) const {
        const Eigen::Index lo = static_cast<Eigen::Index>(b) * batch_size;
        const Eigen::Index hi = std::min(lo + batch_size, data.size());
        X->resize(hi - lo, data.dim());
        y->resize(hi - lo);
        for (Eigen::Index i = lo; i < hi; ++i) {
            X->row(i - lo) = data.features.row(order[static_cast<std::size_t>(i)]);
            (*y)(i - lo) = data.labels(order[static_cast<std::size_t>(i)]);
        }
    }
};

double scheduled_lr(const TrainConfig& cfg, int epoch) {
    if (cfg.schedule == LrSchedule::Constant) return cfg.learning_rate;
    const double frac = static_cast<double>(epoch) / std::max(1, cfg.epochs);
    return cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void check_finite_loss(double loss, long step) {
    if (!std::isfinite(loss)) {
        throw Error("training diverged: non-finite loss at step " + std::to_string(step));
    }
}

// L2/prior gradient theta / (tau^2 n); zero when the prior is disabled.
Vec prior_grad(const Vec& theta, double tau, Eigen::Index n, double weight = 1.0) {
    if (tau <= 0.0) return Vec::Zero(theta.size());
    return (weight / (tau * tau * static_cast<double>(n))) * theta;
}

}  // namespace

void SwagStats::collect(const Vec& snapshot, bool keep_deviation) {
    ++count;
    if (count == 1) {
        mean = snapshot;
        mean_sq = snapshot.cwiseProduct(snapshot);
    } else {
        mean += (snapshot - mean) / static_cast<double>(count);
        mean_sq += (snapshot.cwiseProduct(snapshot) - mean_sq) / static_cast<double>(count);
    }
    if (keep_deviation && rank > 0) {
        deviations.push_back(snapshot - mean);
        while (static_cast<int>(deviations.size()) > rank) deviations.pop_front();
    }
}

Vec sam_step(const LossGradFn& loss_grad, const Vec& current, double rho, const Vec& t_diag,
             bool flat) {
    auto [loss, grad] = loss_grad(current);
    if (!flat || rho == 0.0) return grad;
    const Vec perturbed = sam_perturb(current, grad, rho, t_diag);
    return loss_grad(perturbed).second;
}

GaussianPosterior train_sgvb(const MlpSpec& spec, const TrainConfig& cfg, const Dataset& data,
                             Rng& rng, bool local_reparam) {
    check(data.size() > 0, "train_sgvb: empty dataset");
    spec.validate();
    const Eigen::Index n = data.size();
    const double lambda = cfg.effective_lambda(n);
    const double lam_scale = lambda / static_cast<double>(n);
    const PriorSpec prior{cfg.prior_tau > 0.0 ? cfg.prior_tau : 1.0};
    const bool use_prior = cfg.prior_tau > 0.0;

    GaussianPosterior post;
    {
        FlatParams init = init_params(spec, rng);
        post.mu = init.values;
        post.layout = init.layout;
        post.log_sigma = Vec::Constant(post.mu.size(), -5.0);
    }

    Batcher batcher(data, cfg.batch_size);
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = scheduled_lr(cfg, epoch);
        batcher.shuffle(rng);
        for (int b = 0; b < batcher.n_batches(); ++b) {
            Mat X;
            VecI y;
            batcher.batch(b, &X, &y);
            const Vec sigma = post.sigma();

            Vec g_mu = Vec::Zero(post.mu.size());
            Vec g_ls = Vec::Zero(post.mu.size());
            for (int s = 0; s < std::max(1, cfg.mc_train_samples); ++s) {
                if (!local_reparam) {
                    Vec eps(post.mu.size());
                    for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = rng.normal();
                    // data loss as a function of mu with eps and sigma fixed
                    auto f = [&](const Vec& mu) -> std::pair<double, Vec> {
                        FlatParams theta{mu + sigma.cwiseProduct(eps), post.layout};
                        Vec g;
                        const double l = mlp_loss(spec, theta, X, y, &g);
                        return {l, g};
                    };
                    auto [loss0, grad0] = f(post.mu);
                    check_finite_loss(loss0, step);
                    Vec g_theta = grad0;
                    if (cfg.flat && cfg.rho > 0.0) {
                        const Vec t_diag = geometry_diag(post.mu, sigma, cfg.geometry);
                        const Vec mu_p = sam_perturb(post.mu, grad0, cfg.rho, t_diag);
                        g_theta = f(mu_p).second;
                    }
                    g_mu += g_theta;
                    g_ls += g_theta.cwiseProduct(eps).cwiseProduct(sigma);
                } else {
                    LrtNoise noise = draw_lrt_noise(spec, X.rows(), rng);
                    auto f = [&](const Vec& mu) {
                        Tape tape;
                        std::vector<Tape::NodeId> mu_nodes, ls_nodes;
                        Tape::NodeId logits = build_lrt(tape, spec, mu, post.log_sigma, post.layout,
                                                        X, noise, &mu_nodes, &ls_nodes);
                        Tape::NodeId loss = tape.softmax_cross_entropy(logits, y);
                        const double l = tape.scalar(loss);
                        tape.backward(loss);
                        Vec gm = collect_param_grads(tape, mu_nodes, post.layout);
                        Vec gl = collect_param_grads(tape, ls_nodes, post.layout);
                        return std::make_tuple(l, std::move(gm), std::move(gl));
                    };
                    auto [loss0, gm0, gl0] = f(post.mu);
                    check_finite_loss(loss0, step);
                    if (cfg.flat && cfg.rho > 0.0) {
                        const Vec t_diag = geometry_diag(post.mu, sigma, cfg.geometry);
                        const Vec mu_p = sam_perturb(post.mu, gm0, cfg.rho, t_diag);
                        auto [loss1, gm1, gl1] = f(mu_p);
                        check_finite_loss(loss1, step);
                        g_mu += gm1;
                        g_ls += gl1;
                    } else {
                        g_mu += gm0;
                        g_ls += gl0;
                    }
                }
            }
            const double inv_s = 1.0 / std::max(1, cfg.mc_train_samples);
            g_mu *= inv_s;
            g_ls *= inv_s;

            Vec kl_mu = Vec::Zero(post.mu.size());
            Vec kl_ls = Vec::Zero(post.mu.size());
            if (use_prior) kl_diag_gaussian_grad(post, prior, &kl_mu, &kl_ls);

            post.mu -= lr * (lam_scale * g_mu + kl_mu / static_cast<double>(n));
            post.log_sigma -= lr * (lam_scale * g_ls + kl_ls / static_cast<double>(n));
            post.clamp_log_sigma();

            ++step;
            if (cfg.max_steps > 0 && step >= cfg.max_steps) return post;
        }
    }
    return post;
}

ParticleSet train_sgld(const MlpSpec& spec, const TrainConfig& cfg, const Dataset& data, Rng& rng,
                       bool flat) {
    check(data.size() > 0, "train_sgld: empty dataset");
    check(cfg.sgld_temperature < 0.0 || cfg.sgld_temperature >= 0.0, "train_sgld: bad temperature");
    spec.validate();
    const Eigen::Index n = data.size();
    const double lam_scale = cfg.effective_lambda(n) / static_cast<double>(n);
    const double temp = cfg.effective_temperature(n);
    const int burn_in = cfg.epochs / 2;

    FlatParams params = init_params(spec, rng);
    Batcher batcher(data, cfg.batch_size);
    ParticleSet out;
    long step = 0;
    bool truncated = false;
    for (int epoch = 0; epoch < cfg.epochs && !truncated; ++epoch) {
        const double lr = scheduled_lr(cfg, epoch);
        batcher.shuffle(rng);
        for (int b = 0; b < batcher.n_batches(); ++b) {
            Mat X;
            VecI y;
            batcher.batch(b, &X, &y);
            auto f = [&](const Vec& theta) -> std::pair<double, Vec> {
                FlatParams p{theta, params.layout};
                Vec g;
                const double l = mlp_loss(spec, p, X, y, &g);
                check_finite_loss(l, step);
                return {l, g};
            };
            const Vec t_diag = Vec::Ones(params.values.size());
            Vec g_data = sam_step(f, params.values, cfg.rho, t_diag, flat);
            Vec g_star = lam_scale * g_data + prior_grad(params.values, cfg.prior_tau, n);
            Vec z(params.values.size());
            for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
            params.values -= lr * g_star;
            params.values += std::sqrt(2.0 * lr * temp) * z;
            ++step;
            if (cfg.max_steps > 0 && step >= cfg.max_steps) {
                truncated = true;
                break;
            }
        }
        if (!truncated && epoch >= burn_in) {
            out.particles.push_back(params.values);
            out.steps.push_back(step);
        }
    }
    out.final_state = params.values;
    if (out.particles.empty()) {
        if (truncated) {
            out.particles.push_back(params.values);
            out.steps.push_back(step);
        } else {
            throw Error("train_sgld: no particles collected");
        }
    }
    return out;
}

namespace {

SwagStats run_swag_sgd(const MlpSpec& spec, const TrainConfig& cfg, const Dataset& data, Rng& rng,
                       bool flat, bool diag_only) {
    check(data.size() > 0, "train_swag: empty dataset");
    spec.validate();
    const Eigen::Index n = data.size();
    const double lam_scale = cfg.effective_lambda(n) / static_cast<double>(n);
    const int collect_start = cfg.effective_swag_start(cfg.epochs);
    check(collect_start < cfg.epochs, "train_swag: collection must start before the last epoch");

    FlatParams params = init_params(spec, rng);
    Batcher batcher(data, cfg.batch_size);
    SwagStats stats;
    stats.rank = diag_only ? 0 : cfg.swag_rank;
    long step = 0;
    bool truncated = false;
    for (int epoch = 0; epoch < cfg.epochs && !truncated; ++epoch) {
        const double lr = scheduled_lr(cfg, epoch);
        batcher.shuffle(rng);
        for (int b = 0; b < batcher.n_batches(); ++b) {
            Mat X;
            VecI y;
            batcher.batch(b, &X, &y);
            auto f = [&](const Vec& theta) -> std::pair<double, Vec> {
                FlatParams p{theta, params.layout};
                Vec g;
                const double l = mlp_loss(spec, p, X, y, &g);
                check_finite_loss(l, step);
                return {l, g};
            };
            const Vec t_diag = Vec::Ones(params.values.size());
            Vec g_data = sam_step(f, params.values, cfg.rho, t_diag, flat);
            params.values -= lr * (lam_scale * g_data + prior_grad(params.values, cfg.prior_tau, n));
            ++step;
            if (cfg.max_steps > 0 && step >= cfg.max_steps) {
                truncated = true;
                break;
            }
        }
        if (!truncated && epoch >= collect_start) {
            stats.collect(params.values, !diag_only);
        }
    }
    stats.final_state = params.values;
    if (stats.count == 0) {
        if (truncated) {
            stats.collect(params.values, !diag_only);
        } else {
            throw Error("train_swag: zero collected models");
        }
    }
    return stats;
}

}  // namespace

SwagStats train_swag(const MlpSpec& spec, const TrainConfig& cfg, const Dataset& data, Rng& rng,
                     bool flat, bool diag_only) {
    return run_swag_sgd(spec, cfg, data, rng, flat, diag_only);
}

Vec swag_sample(const SwagStats& stats, Rng& rng, bool diag_only) {
    check(stats.count >= 1, "swag_sample: no collected models");
    const Vec std_diag = stats.variance().array().sqrt().matrix();
    Vec eps(stats.mean.size());
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = rng.normal();
    if (diag_only || stats.deviations.size() < 2) {
        return stats.mean + std_diag.cwiseProduct(eps);
    }
    const auto r = static_cast<double>(stats.deviations.size());
    Vec sample = stats.mean + (1.0 / std::numbers::sqrt2) * std_diag.cwiseProduct(eps);
    const double scale = 1.0 / std::sqrt(2.0 * (r - 1.0));
    for (const Vec& d : stats.deviations) {
        sample += scale * rng.normal() * d;
    }
    return sample;
}

FlatParams train_mc_dropout(const MlpSpec& spec, const TrainConfig& cfg, const Dataset& data,
                            Rng& rng, bool flat) {
    check(data.size() > 0, "train_mc_dropout: empty dataset");
    check(cfg.keep_prob > 0.0 && cfg.keep_prob <= 1.0,
          "train_mc_dropout: keep_prob must be in (0, 1]");
    spec.validate();
    const Eigen::Index n = data.size();
    const double lam_scale = cfg.effective_lambda(n) / static_cast<double>(n);

    FlatParams params = init_params(spec, rng);
    Batcher batcher(data, cfg.batch_size);
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = scheduled_lr(cfg, epoch);
        batcher.shuffle(rng);
        for (int b = 0; b < batcher.n_batches(); ++b) {
            Mat X;
            VecI y;
            batcher.batch(b, &X, &y);
            // mask fixed for the step so the flat variant perturbs weights
            // under the same dropout realization
            DropoutMasks masks;
            if (cfg.keep_prob < 1.0) masks = draw_dropout_masks(spec, X.rows(), cfg.keep_prob, rng);
            auto f = [&](const Vec& theta) -> std::pair<double, Vec> {
                FlatParams p{theta, params.layout};
                Vec g;
                const double l = mlp_loss(spec, p, X, y, &g,
                                          masks.empty() ? nullptr : &masks, cfg.keep_prob);
                check_finite_loss(l, step);
                return {l, g};
            };
            const Vec t_diag = Vec::Ones(params.values.size());
            Vec g_data = sam_step(f, params.values, cfg.rho, t_diag, flat);
            // L2 weight proportional to keep_prob
            Vec g_prior = prior_grad(params.values, cfg.prior_tau, n, cfg.keep_prob);
            params.values -= lr * (lam_scale * g_data + g_prior);
            ++step;
            if (cfg.max_steps > 0 && step >= cfg.max_steps) return params;
        }
    }
    return params;
}

std::vector<FlatParams> train_deep_ensemble(const MlpSpec& spec, const TrainConfig& cfg,
                                            const Dataset& data, Rng& /*rng*/, bool flat) {
    check(data.size() > 0, "train_deep_ensemble: empty dataset");
    check(cfg.ensemble_size >= 1, "train_deep_ensemble: ensemble_size must be >= 1");
    spec.validate();
    const Eigen::Index n = data.size();
    const double lambda = cfg.effective_lambda(n);

    std::vector<FlatParams> members;
    for (int k = 0; k < cfg.ensemble_size; ++k) {
        Rng member_rng(cfg.seed + static_cast<std::uint64_t>(k));
        FlatParams params = init_params(spec, member_rng);
        Batcher batcher(data, cfg.batch_size);
        long step = 0;
        bool done = false;
        for (int epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
            const double lr = scheduled_lr(cfg, epoch);
            batcher.shuffle(member_rng);
            for (int b = 0; b < batcher.n_batches(); ++b) {
                Mat X;
                VecI y;
                batcher.batch(b, &X, &y);
                auto f = [&](const Vec& theta) -> std::pair<double, Vec> {
                    FlatParams p{theta, params.layout};
                    Vec g;
                    const double l = mlp_loss(spec, p, X, y, &g);
                    check_finite_loss(l, step);
                    return {l, g};
                };
                const Vec t_diag = Vec::Ones(params.values.size());
                Vec g_data = sam_step(f, params.values, cfg.rho, t_diag, flat);
                // per-member objective L_S + ||theta||^2 / (2 lambda)
                Vec g_prior = (cfg.prior_tau > 0.0 && lambda > 0.0)
                                  ? Vec((1.0 / lambda) * params.values)
                                  : Vec(Vec::Zero(params.values.size()));
                params.values -= lr * (g_data + g_prior);
                ++step;
                if (cfg.max_steps > 0 && step >= cfg.max_steps) {
                    done = true;
                    break;
                }
            }
        }
        members.push_back(std::move(params));
    }
    return members;
}

}  // namespace sabnn
