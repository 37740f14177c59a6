// End-to-end acceptance checks. Each criterion prints exactly one
// "PASS criterion N: ..." or "FAIL criterion N: ..." line; the process
// exits nonzero if any criterion fails.

#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "sabnn/checkpoint.hpp"
#include "sabnn/error.hpp"
#include "sabnn/eval.hpp"
#include "sabnn/flatness.hpp"
#include "sabnn/trainers.hpp"

using namespace sabnn;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& what, bool ok, const std::string& detail = "") {
    std::printf("%s criterion %d: %s%s%s\n", ok ? "PASS" : "FAIL", criterion, what.c_str(),
                detail.empty() ? "" : " -- ", detail.c_str());
    if (!ok) ++g_failures;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------- criterion 1: grid posterior closed form vs discretized optimum

void criterion_gibbs() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(101);
    bool ok = true;
    std::string detail;
    for (int trial = 0; trial < 50 && ok; ++trial) {
        const int P = 1 + static_cast<int>(rng.uniform_int(4));
        GibbsGrid grid;
        grid.loss = Vec(P);
        grid.prior_mass = Vec(P);
        double psum = 0.0;
        for (int i = 0; i < P; ++i) {
            grid.points.push_back("p" + std::to_string(i));
            grid.loss(i) = 2.0 * rng.uniform();
            grid.prior_mass(i) = 0.05 + rng.uniform();
            psum += grid.prior_mass(i);
        }
        grid.prior_mass /= psum;
        // sum-to-one within the validator's tolerance
        grid.prior_mass(P - 1) += 1.0 - grid.prior_mass.sum();
        const double lambda = 0.5 + 1.5 * rng.uniform();

        const Vec closed = gibbs_posterior_grid(grid, lambda);
        const Vec oracle = gibbs_oracle(grid, lambda, 1e-3);
        const double tv = 0.5 * (closed - oracle).cwiseAbs().sum();
        const double obj_closed = gibbs_objective(grid, lambda, closed);
        const double obj_oracle = gibbs_objective(grid, lambda, oracle);
        if (tv > 2e-3) {
            ok = false;
            detail = "total variation " + std::to_string(tv) + " at trial " + std::to_string(trial);
        }
        if (obj_closed > obj_oracle + 1e-9) {
            ok = false;
            detail = "closed-form objective above the discretized optimum";
        }
    }
    const double secs = seconds_since(t0);
    if (secs >= 60.0) {
        ok = false;
        detail = "runtime " + std::to_string(secs) + " s";
    }
    report(1, "closed-form grid posterior matches the discretized optimizer", ok, detail);
}

// ---------- criterion 2: reverse-mode gradients vs finite differences

void criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(202);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        MlpSpec spec;
        spec.widths.push_back(2 + static_cast<int>(rng.uniform_int(4)));
        const int hidden = static_cast<int>(rng.uniform_int(3));
        for (int l = 0; l < hidden; ++l) {
            spec.widths.push_back(1 + static_cast<int>(rng.uniform_int(64)));
        }
        spec.widths.push_back(2 + static_cast<int>(rng.uniform_int(3)));
        // smooth activation: a central difference at h=1e-5 is not a valid
        // oracle across relu kinks
        spec.activation = Activation::Tanh;

        FlatParams p = init_params(spec, rng);
        const Eigen::Index batch = 4;
        Mat X(batch, spec.input_dim());
        VecI y(batch);
        for (Eigen::Index i = 0; i < batch; ++i) {
            for (int j = 0; j < spec.input_dim(); ++j) X(i, j) = rng.normal();
            y(i) = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec.output_dim())));
        }
        Vec g;
        mlp_loss(spec, p, X, y, &g);
        auto loss_only = [&](const Vec& theta) {
            return mlp_loss(spec, FlatParams{theta, p.layout}, X, y);
        };
        Vec fd = finite_difference_gradient(loss_only, p.values, 1e-5);
        for (Eigen::Index i = 0; i < g.size(); ++i) {
            const double scale = std::max({1.0, std::abs(g(i)), std::abs(fd(i))});
            worst = std::max(worst, std::abs(g(i) - fd(i)) / scale);
        }
    }
    const double secs = seconds_since(t0);
    const bool ok = worst < 1e-4 && secs < 30.0;
    report(2, "reverse-mode gradients agree with central finite differences", ok,
           "max relative error " + std::to_string(worst) + ", " + std::to_string(secs) + " s");
}

// ---------- criterion 3: perturbation constraint tightness

void criterion_sam() {
    Rng rng(303);
    double worst_euclid = 0.0, worst_t = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.uniform_int(16));
        Vec mu(d), g(d), t(d);
        for (Eigen::Index j = 0; j < d; ++j) {
            mu(j) = rng.normal();
            g(j) = rng.normal();
            t(j) = 0.05 + rng.uniform();
        }
        if (g.norm() < 1e-9) g(0) += 1.0;
        const double rho = 0.01 + rng.uniform();
        const Vec moved_i = sam_perturb(mu, g, rho, Vec::Ones(d));
        worst_euclid = std::max(worst_euclid, std::abs((moved_i - mu).norm() - rho));
        const Vec moved_t = sam_perturb(mu, g, rho, t);
        worst_t = std::max(worst_t, std::abs(t_norm(moved_t - mu, t) - rho));
    }
    const bool ok = worst_euclid < 1e-9 && worst_t < 1e-9;
    report(3, "perturbation step lands exactly on the rho sphere", ok,
           "worst deviations " + std::to_string(worst_euclid) + " / " + std::to_string(worst_t));
}

// ---------- criterion 4: rho -> 0 reduces every flat method to its baseline

void criterion_rho_zero() {
    Dataset data = gen_two_moons(64, 0.2, 5);
    const MlpSpec spec{{2, 8, 2}, Activation::Relu};
    TrainConfig cfg;
    cfg.epochs = 1000;
    cfg.batch_size = 16;
    cfg.max_steps = 50;
    cfg.seed = 9;
    cfg.ensemble_size = 2;
    cfg.swag_collect_start_epoch = 0;

    bool ok = true;
    std::string detail;
    auto compare = [&](const std::string& name, const Vec& a, const Vec& b) {
        const double diff = (a - b).cwiseAbs().maxCoeff();
        if (diff > 1e-12) {
            ok = false;
            detail = name + " differs by " + std::to_string(diff);
        }
    };

    TrainConfig flat = cfg;
    flat.flat = true;
    flat.rho = 0.0;

    for (bool lrt : {false, true}) {
        Rng r1(cfg.seed), r2(cfg.seed);
        GaussianPosterior a = train_sgvb(spec, cfg, data, r1, lrt);
        GaussianPosterior b = train_sgvb(spec, flat, data, r2, lrt);
        compare(lrt ? "sgvb-lrt mu" : "sgvb mu", a.mu, b.mu);
        compare(lrt ? "sgvb-lrt log_sigma" : "sgvb log_sigma", a.log_sigma, b.log_sigma);
    }
    {
        Rng r1(cfg.seed), r2(cfg.seed);
        compare("sgld", train_sgld(spec, cfg, data, r1, false).final_state,
                train_sgld(spec, flat, data, r2, true).final_state);
    }
    for (bool diag : {false, true}) {
        Rng r1(cfg.seed), r2(cfg.seed);
        SwagStats a = train_swag(spec, cfg, data, r1, false, diag);
        SwagStats b = train_swag(spec, flat, data, r2, true, diag);
        compare(diag ? "swag-diag mean" : "swag mean", a.mean, b.mean);
        compare(diag ? "swag-diag final" : "swag final", a.final_state, b.final_state);
    }
    {
        Rng r1(cfg.seed), r2(cfg.seed);
        compare("mc-dropout", train_mc_dropout(spec, cfg, data, r1, false).values,
                train_mc_dropout(spec, flat, data, r2, true).values);
    }
    {
        Rng r1(cfg.seed), r2(cfg.seed);
        auto a = train_deep_ensemble(spec, cfg, data, r1, false);
        auto b = train_deep_ensemble(spec, flat, data, r2, true);
        for (std::size_t k = 0; k < a.size(); ++k) {
            compare("deep-ensemble member " + std::to_string(k), a[k].values, b[k].values);
        }
    }
    report(4, "rho = 0 sharpness-aware training reproduces every baseline", ok, detail);
}

// ---------- criterion 5: binned calibration error vs enumeration

double ece_oracle(const Mat& probs, const VecI& labels, int bins) {
    const Eigen::Index n = probs.rows();
    double total = 0.0;
    for (int b = 0; b < bins; ++b) {
        const double lo = static_cast<double>(b) / bins;
        const double hi = static_cast<double>(b + 1) / bins;
        double csum = 0.0;
        long hits = 0, cnt = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            for (int j = 1; j < probs.cols(); ++j) {
                if (probs(i, j) > probs(i, best)) best = j;
            }
            const double c = probs(i, best);
            const bool in_bin = b == 0 ? (c <= hi) : (c > lo && c <= hi);
            if (!in_bin) continue;
            ++cnt;
            csum += c;
            if (best == labels(i)) ++hits;
        }
        if (cnt > 0) {
            total += (static_cast<double>(cnt) / n) *
                     std::abs(static_cast<double>(hits) / cnt - csum / cnt);
        }
    }
    return total;
}

void criterion_ece() {
    Rng rng(505);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_int(200));
        const int c = 2 + static_cast<int>(rng.uniform_int(4));
        Mat probs(n, c);
        VecI labels(n);
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < c; ++j) {
                probs(i, j) = rng.uniform() + 1e-9;
                s += probs(i, j);
            }
            probs.row(i) /= s;
            labels(i) = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(c)));
        }
        worst = std::max(worst, std::abs(ece(probs, labels, 20).first -
                                         ece_oracle(probs, labels, 20)));
    }

    Mat p(4, 2);
    p << 0.9, 0.1, 0.8, 0.2, 0.6, 0.4, 0.55, 0.45;
    VecI y(4);
    y << 0, 0, 1, 0;
    const double worked = ece(p, y, 2).first;
    const double exact = 0.75 - (0.9 + 0.8 + 0.6 + 0.55) / 4.0;
    const bool ok = worst <= 1e-12 && worked == exact && std::abs(worked - 0.0375) < 1e-15;
    report(5, "calibration error matches exhaustive binning and the worked example", ok,
           "max deviation " + std::to_string(worst));
}

// ---------- criterion 6: streaming trajectory moments

void criterion_swag_moments() {
    Rng rng(606);
    SwagStats stats;
    stats.rank = 10;
    std::vector<Vec> snaps;
    for (int i = 0; i < 100; ++i) {
        Vec s(12);
        for (int j = 0; j < 12; ++j) s(j) = 5.0 * rng.normal();
        snaps.push_back(s);
        stats.collect(s, true);
    }
    Vec mean = Vec::Zero(12), sq = Vec::Zero(12);
    for (const Vec& s : snaps) {
        mean += s;
        sq += s.cwiseProduct(s);
    }
    mean /= 100.0;
    sq /= 100.0;
    const double d1 = (stats.mean - mean).cwiseAbs().maxCoeff();
    const double d2 = (stats.mean_sq - sq).cwiseAbs().maxCoeff();

    SwagStats degenerate;
    degenerate.rank = 0;
    Vec v(3);
    v << 1.0, -4.0, 0.25;
    for (int i = 0; i < 5; ++i) degenerate.collect(v, false);
    Rng srng(1);
    const bool exact_mean = swag_sample(degenerate, srng, true) == v;

    const bool ok = d1 < 1e-10 && d2 < 1e-10 && exact_mean;
    report(6, "streaming trajectory moments equal batch statistics", ok,
           "mean dev " + std::to_string(d1) + ", second-moment dev " + std::to_string(d2));
}

// ---------- criterion 7: bound evaluator

void criterion_bound() {
    const double total = pac_bayes_bound_term({1.0, 2.0, 1.0, 1.0, 1.0, 0.0}).total;
    const long double inner = 1.0L + 2.0L * std::log(2.0L) + 2.0L * std::log(2.0L);
    const long double num = 1.0L + std::log(1.0L + 2.0L * inner) + 2.0L * std::log(2.0L);
    const long double expect = 1.0L / std::sqrt(2.0L) + std::sqrt(num / 4.0L);
    bool ok = std::abs(total - static_cast<double>(expect)) < 1e-3 &&
              std::abs(total - 1.7715) < 1e-3;

    double prev = std::numeric_limits<double>::infinity();
    for (double n : {1e3, 1e5, 1e7, 1e9}) {
        const double cur = pac_bayes_bound_term({10.0, n, 1.0, 0.05, 0.05, 0.0}).total;
        if (cur >= prev) ok = false;
        prev = cur;
    }

    if (covering_number_bound(1.0, 2.0, 1.0).linear_value != 8.0) ok = false;
    report(7, "generalization bound values, monotonicity, covering count", ok,
           "reference value " + std::to_string(total));
}

// ---------- criterion 8: sharpness-aware variational training flattens minima

void criterion_flatness_effect() {
    const auto t0 = std::chrono::steady_clock::now();
    const MlpSpec spec{{2, 16, 16, 2}, Activation::Relu};
    int sharper_seeds = 0;
    double lam_base = 0.0, lam_flat = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Dataset data = gen_two_moons(400, 0.2, seed);
        TrainConfig cfg;
        cfg.epochs = 200;
        cfg.batch_size = 64;
        cfg.seed = seed;
        TrainConfig flat_cfg = cfg;
        flat_cfg.flat = true;
        flat_cfg.rho = 5e-3;

        Rng r1(seed), r2(seed);
        GaussianPosterior base = train_sgvb(spec, cfg, data, r1, false);
        GaussianPosterior flat = train_sgvb(spec, flat_cfg, data, r2, false);

        auto loss_grad = [&](const Vec& theta) -> std::pair<double, Vec> {
            Vec g;
            const double l =
                mlp_loss(spec, FlatParams{theta, base.layout}, data.features, data.labels, &g);
            return {l, g};
        };
        auto mean_sharp = [&](const GaussianPosterior& post, std::uint64_t s) {
            Rng rng(s);
            double sum = 0.0;
            for (int i = 0; i < 5; ++i) {
                const Vec theta = sample_weights_reparam(post, rng).params.values;
                sum += sharpness(loss_grad, theta, 0.05, 10);
            }
            return sum / 5.0;
        };
        const double sh_base = mean_sharp(base, 1000 + seed);
        const double sh_flat = mean_sharp(flat, 1000 + seed);
        if (sh_flat < sh_base) ++sharper_seeds;

        Rng er1(2000 + seed), er2(2000 + seed);
        lam_base += top_eigenvalues(loss_grad, base.mu, 1, 200, er1)[0];
        lam_flat += top_eigenvalues(loss_grad, flat.mu, 1, 200, er2)[0];
    }
    const double secs = seconds_since(t0);
    const bool ok = sharper_seeds >= 4 && lam_flat < lam_base && secs < 300.0;
    report(8, "sharpness-aware variational posteriors sit in flatter minima", ok,
           std::to_string(sharper_seeds) + "/5 seeds flatter, mean top eigenvalue " +
               std::to_string(lam_flat / 5.0) + " vs " + std::to_string(lam_base / 5.0) + ", " +
               std::to_string(secs) + " s");
}

// ---------- criterion 9: leading eigenvalue estimation

void criterion_eigenvalues() {
    Rng rng(909);
    bool ok = true;
    std::string detail;
    for (int trial = 0; trial < 10 && ok; ++trial) {
        Mat A(10, 10);
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j) A(i, j) = rng.normal();
        Mat S = 0.5 * (A + A.transpose());
        auto mv = [&](const Vec& v) { return Vec(S * v); };
        const auto got = top_eigenvalues(mv, 10, 5, 5000, rng);
        Eigen::SelfAdjointEigenSolver<Mat> es(S);
        const Vec all = es.eigenvalues();
        for (int k = 0; k < 5; ++k) {
            const double expect = all(9 - k);
            const double rel =
                std::abs(got[static_cast<std::size_t>(k)] - expect) / std::max(1e-8, std::abs(expect));
            if (rel > 1e-3) {
                ok = false;
                detail = "eigenvalue " + std::to_string(k) + " off by " + std::to_string(rel);
            }
        }
        const double ratio_got = got[0] / got[4];
        const double ratio_exp = all(9) / all(5);
        if (std::abs(ratio_got - ratio_exp) / std::abs(ratio_exp) > 1e-3) {
            ok = false;
            detail = "ratio mismatch";
        }
    }
    report(9, "power iteration recovers the top of the spectrum", ok, detail);
}

// ---------- criterion 10: desk-scale ensemble learning

void criterion_learning() {
    const auto t0 = std::chrono::steady_clock::now();
    Dataset full = gen_two_moons(400, 0.2, 1);
    auto [train, test] = split_normalize(full, 0.8, 1);
    const MlpSpec spec{{2, 16, 16, 2}, Activation::Relu};
    TrainConfig cfg;
    cfg.flat = true;
    cfg.rho = 0.05;
    cfg.epochs = 200;
    cfg.batch_size = 64;
    cfg.seed = 1;
    cfg.ensemble_size = 3;
    Rng rng(cfg.seed);
    auto members = train_deep_ensemble(spec, cfg, train, rng, true);

    Mat sum = Mat::Zero(test.size(), 2);
    double worst_member_nll = 0.0;
    for (const FlatParams& m : members) {
        Mat probs = softmax_rows(mlp_forward(spec, m, test.features));
        worst_member_nll = std::max(worst_member_nll, nll(probs, test.labels));
        sum += probs;
    }
    Mat avg = sum / static_cast<double>(members.size());
    const double acc = accuracy(avg, test.labels);
    const double ens_nll = nll(avg, test.labels);
    const double secs = seconds_since(t0);
    const bool ok = acc >= 0.95 && ens_nll <= worst_member_nll && secs < 60.0;
    report(10, "sharpness-aware ensemble learns two moons quickly", ok,
           "test accuracy " + std::to_string(acc) + ", ensemble nll " + std::to_string(ens_nll) +
               " vs worst member " + std::to_string(worst_member_nll) + ", " +
               std::to_string(secs) + " s");
}

// ---------- criterion 11: end-to-end reproducibility through the CLI

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "<missing " + path + ">";
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void criterion_reproducibility() {
    const char* cli = std::getenv("SABNN_CLI");
    if (!cli) {
        report(11, "repeated runs are byte-identical", false, "SABNN_CLI not set");
        return;
    }
    bool ok = true;
    std::string detail;
    for (int pass = 0; pass < 2; ++pass) {
        const std::string tag = pass == 0 ? "a" : "b";
        const std::string train = std::string(cli) +
                                  " train --method swag --epochs 8 --seed 6 "
                                  "--data two-moons:n=96,noise=0.2 --out /tmp/sabnn_acc_" +
                                  tag + ".json > /dev/null 2>&1";
        const std::string eval = std::string(cli) + " eval --checkpoint /tmp/sabnn_acc_" + tag +
                                 ".json --data two-moons:n=96,noise=0.2 --n-samples 10 " +
                                 "--reliability-out /tmp/sabnn_acc_rel_" + tag +
                                 ".csv > /tmp/sabnn_acc_out_" + tag + ".txt 2>&1";
        if (std::system(train.c_str()) != 0 || std::system(eval.c_str()) != 0) {
            ok = false;
            detail = "CLI invocation failed";
        }
    }
    if (ok) {
        if (slurp("/tmp/sabnn_acc_a.json") != slurp("/tmp/sabnn_acc_b.json")) {
            ok = false;
            detail = "checkpoints differ";
        }
        if (slurp("/tmp/sabnn_acc_rel_a.csv") != slurp("/tmp/sabnn_acc_rel_b.csv")) {
            ok = false;
            detail = "reliability tables differ";
        }
        if (slurp("/tmp/sabnn_acc_out_a.txt") != slurp("/tmp/sabnn_acc_out_b.txt")) {
            ok = false;
            detail = "metric output differs";
        }
    }
    report(11, "repeated train and eval runs are byte-identical", ok, detail);
}

}  // namespace

int main() {
    try {
        criterion_gibbs();
        criterion_gradients();
        criterion_sam();
        criterion_rho_zero();
        criterion_ece();
        criterion_swag_moments();
        criterion_bound();
        criterion_flatness_effect();
        criterion_eigenvalues();
        criterion_learning();
        criterion_reproducibility();
    } catch (const std::exception& e) {
        std::printf("FAIL: unexpected exception: %s\n", e.what());
        return 1;
    }
    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all 11 criteria passed\n");
    return 0;
}
