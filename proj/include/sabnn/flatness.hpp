#pragma once

#include <string>
#include <vector>

#include "sabnn/fd.hpp"
#include "sabnn/tensor.hpp"

namespace sabnn {

enum class GeometryKind { Identity, MuOverSigma };

// Diagonal scaling T for the perturbation ball: all-ones, or |mu|/sigma
// floored at 1e-12.
Vec geometry_diag(const Vec& mu, const Vec& sigma, GeometryKind kind);

// mu' = mu + rho * (T .* g) / sqrt(g' T g); the step is tight in the
// diag(T)-weighted norm, ||mu' - mu||_T = rho. With T = I this is the
// Euclidean unit-norm ascent step. Returns mu unchanged when ||g|| < 1e-12.
Vec sam_perturb(const Vec& mu, const Vec& grad, double rho, const Vec& t_diag);

// diag(T)-weighted norm sqrt(v' diag(T)^-1 v).
double t_norm(const Vec& v, const Vec& t_diag);

// max_{||eps|| <= rho} L(theta + eps) - L(theta), approximated by
// ascent_steps projected normalized-gradient steps of size rho/ascent_steps.
// Radial boundary projections of the iterates are also evaluated as
// candidates; the result is the max observed loss minus L(theta), >= 0.
double sharpness(const LossGradFn& loss_grad, const Vec& params, double rho, int ascent_steps);

// Finite parameter grid carrying per-point losses and prior mass.
struct GibbsGrid {
    std::vector<std::string> points;
    Vec loss;
    Vec prior_mass;

    void validate() const;
};

// Closed form q_i = exp(-lambda L_i) p_i / Z, computed with max-subtraction.
Vec gibbs_posterior_grid(const GibbsGrid& grid, double lambda);

// Exact minimizer of lambda * sum q_i L_i + sum q_i log(q_i / p_i) over the
// simplex discretized at the given resolution (grids of <= 4 points).
Vec gibbs_oracle(const GibbsGrid& grid, double lambda, double resolution);

// The objective both routes minimize; 0 log 0 := 0.
double gibbs_objective(const GibbsGrid& grid, double lambda, const Vec& q);

struct CoveringBound {
    double log_value = 0.0;     // k * log(2 R sqrt(k) / eps)
    double linear_value = 0.0;  // exp(log_value) when representable
    bool overflowed = false;
};

// (2 R sqrt(k) / eps)^k, evaluated in log space.
CoveringBound covering_number_bound(double R, double k, double eps);

// sigma = rho / (k^{1/2} (1 + sqrt(log(N^2 n) / k))).
double sigma_from_rho(double rho, double k, double N, double n);
// Same with log N supplied directly (covering numbers overflow quickly).
double sigma_from_rho_log(double rho, double k, double log_N, double n);

struct BoundInputs {
    double k = 1;       // parameter count
    double n = 2;       // sample count
    double R = 1;       // max parameter norm
    double rho = 0.05;  // perturbation radius
    double delta = 0.05;
    double omega = 0.0;  // additive stand-in for the 2*omega(n^{-1/(2k)}) term
};

struct BoundBreakdown {
    double inv_sqrt_n = 0.0;
    double sqrt_term = 0.0;
    double omega_term = 0.0;
    double total = 0.0;
};

// The residual complexity term of the generalization bound:
// 1/sqrt(n) + sqrt( (k (1 + log(1 + (2R^2/rho^2)(1 + 2 log(2 R sqrt(k)) +
// (2/k) log n))) + 2 log(n/delta)) / (4 (n-1)) ) + omega.
BoundBreakdown pac_bayes_bound_term(const BoundInputs& in);

}  // namespace sabnn
