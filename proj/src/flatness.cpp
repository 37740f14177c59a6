#include "sabnn/flatness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sabnn/error.hpp"

namespace sabnn {

Vec geometry_diag(const Vec& mu, const Vec& sigma, GeometryKind kind) {
    if (kind == GeometryKind::Identity) return Vec::Ones(mu.size());
    check(mu.size() == sigma.size(), "geometry_diag: length mismatch");
    check((sigma.array() > 0.0).all(), "geometry_diag: sigma must be positive");
    return (mu.array().abs() / sigma.array()).max(1e-12).matrix();
}

double t_norm(const Vec& v, const Vec& t_diag) {
    return std::sqrt((v.array().square() / t_diag.array()).sum());
}

Vec sam_perturb(const Vec& mu, const Vec& grad, double rho, const Vec& t_diag) {
    check(rho >= 0.0, "sam_perturb: rho must be nonnegative");
    check(mu.size() == grad.size() && mu.size() == t_diag.size(), "sam_perturb: length mismatch");
    if (rho == 0.0) return mu;
    if (grad.norm() < 1e-12) return mu;
    const Vec tg = t_diag.cwiseProduct(grad);
    const double denom = std::sqrt(grad.dot(tg));
    return mu + (rho / denom) * tg;
}

double sharpness(const LossGradFn& loss_grad, const Vec& params, double rho, int ascent_steps) {
    check(rho > 0.0, "sharpness: rho must be positive");
    check(ascent_steps >= 1, "sharpness: ascent_steps must be >= 1");
    const auto [base_loss, base_grad] = loss_grad(params);
    check(std::isfinite(base_loss), "sharpness: non-finite loss at base point");
    double best = base_loss;
    const double step = rho / static_cast<double>(ascent_steps);
    Vec x = params;
    Vec g = base_grad;
    auto consider = [&](const Vec& cand) {
        const auto [l, cg] = loss_grad(cand);
        if (!std::isfinite(l)) throw Error("sharpness: non-finite loss during ascent");
        best = std::max(best, l);
        return cg;
    };
    for (int s = 0; s < ascent_steps; ++s) {
        Vec dir;
        if (g.norm() < 1e-12) {
            dir = Vec::Ones(params.size());
            dir /= dir.norm();
        } else {
            dir = g / g.norm();
        }
        x += step * dir;
        Vec d = x - params;
        const double r = d.norm();
        if (r > rho) {
            x = params + (rho / r) * d;
            d = x - params;
        }
        g = consider(x);
        // the boundary point in the current direction is always a candidate
        if (r > 1e-300 && r < rho) {
            consider(params + (rho / r) * d);
        }
    }

    // fixed-point refinement on the rho sphere: follow the gradient
    // direction from the boundary; every iterate stays in the ball, so
    // these are extra candidates only
    auto direction = [&](const Vec& grad) {
        if (grad.norm() < 1e-12) {
            Vec ones = Vec::Ones(params.size());
            return Vec(ones / ones.norm());
        }
        return Vec(grad / grad.norm());
    };
    Vec y = params + rho * direction(base_grad);
    for (int s = 0; s < ascent_steps; ++s) {
        y = params + rho * direction(consider(y));
    }
    consider(y);
    return best - base_loss;
}

void GibbsGrid::validate() const {
    check(!points.empty(), "GibbsGrid: empty grid");
    check(loss.size() == static_cast<Eigen::Index>(points.size()) &&
              prior_mass.size() == loss.size(),
          "GibbsGrid: field lengths disagree");
    check((prior_mass.array() >= 0.0).all(), "GibbsGrid: negative prior mass");
    check(std::abs(prior_mass.sum() - 1.0) <= 1e-12, "GibbsGrid: prior masses must sum to 1");
    check(loss.allFinite(), "GibbsGrid: losses must be finite");
}

Vec gibbs_posterior_grid(const GibbsGrid& grid, double lambda) {
    grid.validate();
    check(lambda >= 0.0, "gibbs_posterior_grid: lambda must be nonnegative");
    const Eigen::Index m = grid.loss.size();
    Vec logw(m);
    bool any = false;
    for (Eigen::Index i = 0; i < m; ++i) {
        if (grid.prior_mass(i) > 0.0) {
            logw(i) = std::log(grid.prior_mass(i)) - lambda * grid.loss(i);
            any = true;
        } else {
            logw(i) = -std::numeric_limits<double>::infinity();
        }
    }
    check(any, "gibbs_posterior_grid: all prior mass is zero");
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < m; ++i) mx = std::max(mx, logw(i));
    Vec q(m);
    for (Eigen::Index i = 0; i < m; ++i) q(i) = std::isinf(logw(i)) ? 0.0 : std::exp(logw(i) - mx);
    q /= q.sum();
    return q;
}

double gibbs_objective(const GibbsGrid& grid, double lambda, const Vec& q) {
    double obj = 0.0;
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        if (q(i) == 0.0) continue;
        check(grid.prior_mass(i) > 0.0, "gibbs_objective: q puts mass where prior has none");
        obj += q(i) * (lambda * grid.loss(i) + std::log(q(i) / grid.prior_mass(i)));
    }
    return obj;
}

Vec gibbs_oracle(const GibbsGrid& grid, double lambda, double resolution) {
    grid.validate();
    check(lambda >= 0.0, "gibbs_oracle: lambda must be nonnegative");
    check(resolution > 0.0, "gibbs_oracle: resolution must be positive");
    const int P = static_cast<int>(grid.points.size());
    check(P <= 4, "gibbs_oracle: grid too large (at most 4 points)");
    const int M = std::max(1, static_cast<int>(std::llround(1.0 / resolution)));
    const double inf = std::numeric_limits<double>::infinity();

    // per-point cost of assigning mass m/M
    auto point_cost = [&](int i, int m) -> double {
        if (m == 0) return 0.0;
        if (grid.prior_mass(i) <= 0.0) return inf;
        const double q = static_cast<double>(m) / M;
        return q * (lambda * grid.loss(i) + std::log(q / grid.prior_mass(i)));
    };

    // exact discrete minimum over all compositions of M into P parts,
    // computed by dynamic programming on the (separable) objective
    std::vector<std::vector<double>> dp(static_cast<std::size_t>(P) + 1,
                                        std::vector<double>(static_cast<std::size_t>(M) + 1, inf));
    std::vector<std::vector<int>> choice(static_cast<std::size_t>(P) + 1,
                                         std::vector<int>(static_cast<std::size_t>(M) + 1, -1));
    dp[0][0] = 0.0;
    for (int i = 1; i <= P; ++i) {
        for (int m = 0; m <= M; ++m) {
            for (int take = 0; take <= m; ++take) {
                const double prev = dp[static_cast<std::size_t>(i) - 1][static_cast<std::size_t>(m - take)];
                if (std::isinf(prev)) continue;
                const double c = point_cost(i - 1, take);
                if (std::isinf(c)) continue;
                const double total = prev + c;
                if (total < dp[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)]) {
                    dp[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)] = total;
                    choice[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)] = take;
                }
            }
        }
    }
    check(!std::isinf(dp[static_cast<std::size_t>(P)][static_cast<std::size_t>(M)]),
          "gibbs_oracle: no feasible distribution");
    Vec q = Vec::Zero(P);
    int rem = M;
    for (int i = P; i >= 1; --i) {
        const int take = choice[static_cast<std::size_t>(i)][static_cast<std::size_t>(rem)];
        q(i - 1) = static_cast<double>(take) / M;
        rem -= take;
    }
    return q;
}

CoveringBound covering_number_bound(double R, double k, double eps) {
    check(R > 0.0 && k > 0.0 && eps > 0.0, "covering_number_bound: inputs must be positive");
    CoveringBound out;
    out.log_value = k * std::log(2.0 * R * std::sqrt(k) / eps);
    if (out.log_value < 700.0) {
        // factored so integer k with rational 2R/eps stays exact, e.g.
        // R=1, k=2, eps=1 gives 8 with no rounding
        out.linear_value = std::pow(2.0 * R / eps, k) * std::pow(k, 0.5 * k);
    } else {
        out.overflowed = true;
        out.linear_value = std::numeric_limits<double>::infinity();
    }
    return out;
}

double sigma_from_rho_log(double rho, double k, double log_N, double n) {
    check(rho > 0.0 && k > 0.0 && n >= 1.0 && log_N >= 0.0, "sigma_from_rho: invalid inputs");
    const double log_n2n = 2.0 * log_N + std::log(n);
    return rho / (std::sqrt(k) * (1.0 + std::sqrt(log_n2n / k)));
}

double sigma_from_rho(double rho, double k, double N, double n) {
    check(N >= 1.0, "sigma_from_rho: N must be >= 1");
    return sigma_from_rho_log(rho, k, std::log(N), n);
}

BoundBreakdown pac_bayes_bound_term(const BoundInputs& in) {
    check(in.n >= 2.0, "pac_bayes_bound_term: n must be >= 2");
    check(in.k > 0.0 && in.R > 0.0 && in.rho > 0.0, "pac_bayes_bound_term: inputs must be positive");
    check(in.delta > 0.0 && in.delta <= 1.0, "pac_bayes_bound_term: delta must be in (0, 1]");
    BoundBreakdown out;
    out.inv_sqrt_n = 1.0 / std::sqrt(in.n);
    const double inner = 1.0 + 2.0 * std::log(2.0 * in.R * std::sqrt(in.k)) +
                         (2.0 / in.k) * std::log(in.n);
    const double ratio = 2.0 * in.R * in.R / (in.rho * in.rho);
    const double num = in.k * (1.0 + std::log(1.0 + ratio * inner)) + 2.0 * std::log(in.n / in.delta);
    out.sqrt_term = std::sqrt(num / (4.0 * (in.n - 1.0)));
    out.omega_term = in.omega;
    out.total = out.inv_sqrt_n + out.sqrt_term + out.omega_term;
    return out;
}

}  // namespace sabnn
