#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "sabnn/checkpoint.hpp"
#include "sabnn/error.hpp"
#include "sabnn/eval.hpp"
#include "sabnn/flatness.hpp"

using namespace sabnn;

namespace {

struct DataOpts {
    std::string source = "two-moons:n=400,noise=0.2";
    double train_fraction = 1.0;  // < 1 splits and normalizes
    std::uint64_t split_seed = 0;
};

void add_data_opts(CLI::App* cmd, DataOpts* opts) {
    cmd->add_option("--data", opts->source,
                    "two-moons:n=..,noise=..[,seed=..] | blobs:n=..,classes=..,spread=..[,seed=..] "
                    "| csv:path")
        ->capture_default_str();
    cmd->add_option("--train-fraction", opts->train_fraction,
                    "if < 1, split and normalize; train uses the train side, eval the test side")
        ->capture_default_str();
    cmd->add_option("--split-seed", opts->split_seed)->capture_default_str();
}

std::map<std::string, std::string> parse_kv(const std::string& args, const std::string& flagname) {
    std::map<std::string, std::string> kv;
    std::stringstream ss(args);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw Error(flagname + ": expected key=value, got '" + item + "'");
        }
        kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return kv;
}

double kv_double(const std::map<std::string, std::string>& kv, const std::string& key, double dflt) {
    auto it = kv.find(key);
    if (it == kv.end()) return dflt;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw Error("--data: bad numeric value for '" + key + "'");
    }
}

Dataset make_dataset(const DataOpts& opts, bool test_side) {
    const auto colon = opts.source.find(':');
    const std::string kind = opts.source.substr(0, colon);
    const std::string rest = colon == std::string::npos ? "" : opts.source.substr(colon + 1);
    Dataset full;
    if (kind == "two-moons") {
        auto kv = parse_kv(rest, "--data");
        full = gen_two_moons(static_cast<int>(kv_double(kv, "n", 400)), kv_double(kv, "noise", 0.2),
                             static_cast<std::uint64_t>(kv_double(kv, "seed", 0)));
    } else if (kind == "blobs") {
        auto kv = parse_kv(rest, "--data");
        const int classes = static_cast<int>(kv_double(kv, "classes", 3));
        check(classes >= 2, "--data: blobs needs classes >= 2");
        std::vector<Vec> centers;
        for (int c = 0; c < classes; ++c) {
            const double a = 2.0 * 3.14159265358979323846 * c / classes;
            Vec ctr(2);
            ctr << 2.0 * std::cos(a), 2.0 * std::sin(a);
            centers.push_back(ctr);
        }
        full = gen_gaussian_blobs(static_cast<int>(kv_double(kv, "n", 300)), centers,
                                  kv_double(kv, "spread", 0.5),
                                  static_cast<std::uint64_t>(kv_double(kv, "seed", 0)));
    } else if (kind == "csv") {
        check(!rest.empty(), "--data: csv needs a path, csv:path");
        full = load_csv(rest, /*has_header=*/true);
    } else {
        throw Error("--data: unknown dataset kind '" + kind + "'");
    }
    if (opts.train_fraction >= 1.0) return full;
    auto [train, test] = split_normalize(full, opts.train_fraction, opts.split_seed);
    return test_side ? test : train;
}

struct TrainOpts {
    std::string method = "sgvb";
    bool flat = false;
    std::string geometry = "identity";
    double rho = 0.05;
    TrainConfig cfg;
    std::string hidden = "16,16";
    std::string activation = "relu";
    std::string out = "checkpoint.json";
};

std::vector<int> parse_hidden(const std::string& text) {
    std::vector<int> widths;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            widths.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw Error("--hidden: bad width '" + item + "'");
        }
    }
    return widths;
}

void print_metric(const char* name, double v) { std::printf("%s %.9g\n", name, v); }

int cmd_train(const TrainOpts& opts, const DataOpts& data_opts) {
    TrainConfig cfg = opts.cfg;
    cfg.method = parse_method(opts.method);
    cfg.flat = opts.flat;
    cfg.geometry = parse_geometry(opts.geometry);
    cfg.rho = opts.rho;
    const bool variational = cfg.method == Method::Sgvb || cfg.method == Method::SgvbLrt;
    if (cfg.geometry == GeometryKind::MuOverSigma && !variational) {
        std::printf("warning: geometry mu-over-sigma needs a variational posterior; "
                    "falling back to identity\n");
        cfg.geometry = GeometryKind::Identity;
    }

    Dataset data = make_dataset(data_opts, /*test_side=*/false);
    MlpSpec spec;
    spec.widths.push_back(static_cast<int>(data.dim()));
    for (int w : parse_hidden(opts.hidden)) spec.widths.push_back(w);
    spec.widths.push_back(data.n_classes);
    if (opts.activation == "tanh") {
        spec.activation = Activation::Tanh;
    } else if (opts.activation == "relu") {
        spec.activation = Activation::Relu;
    } else {
        throw Error("--activation: expected relu or tanh");
    }
    spec.validate();

    Checkpoint ckpt;
    ckpt.method = cfg.method;
    ckpt.config = cfg;
    ckpt.spec = spec;
    ckpt.fingerprint = fingerprint_of(data);

    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(cfg.seed);
    Vec representative;
    const auto layout = make_layout(spec);
    switch (cfg.method) {
        case Method::Sgvb:
        case Method::SgvbLrt: {
            ckpt.gaussian = train_sgvb(spec, cfg, data, rng, cfg.method == Method::SgvbLrt);
            representative = ckpt.gaussian->mu;
            break;
        }
        case Method::Sgld: {
            ckpt.particles = train_sgld(spec, cfg, data, rng, cfg.flat);
            representative = ckpt.particles->final_state;
            break;
        }
        case Method::Swag:
        case Method::SwagDiag: {
            ckpt.swag = train_swag(spec, cfg, data, rng, cfg.flat,
                                   cfg.method == Method::SwagDiag);
            representative = ckpt.swag->mean;
            break;
        }
        case Method::McDropout: {
            ckpt.members = std::vector<FlatParams>{train_mc_dropout(spec, cfg, data, rng, cfg.flat)};
            representative = ckpt.members->front().values;
            break;
        }
        case Method::DeepEnsemble: {
            ckpt.members = train_deep_ensemble(spec, cfg, data, rng, cfg.flat);
            representative = ckpt.members->front().values;
            break;
        }
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    save_checkpoint(opts.out, ckpt);
    const double final_loss =
        mlp_loss(spec, FlatParams{representative, layout}, data.features, data.labels);
    print_metric("final_train_loss", final_loss);
    print_metric("wall_time_s", secs);
    std::printf("checkpoint %s\n", opts.out.c_str());
    return 0;
}

struct EvalOpts {
    std::string ckpt_path;
    int n_samples = 30;
    int ece_bins = 20;
    std::uint64_t eval_seed = 0;
    std::string reliability_out;
};

int cmd_eval(const EvalOpts& opts, const DataOpts& data_opts) {
    Checkpoint ckpt = load_checkpoint(opts.ckpt_path);
    Dataset data = make_dataset(data_opts, /*test_side=*/true);
    if (static_cast<long>(data.dim()) != ckpt.fingerprint.d) {
        throw Error("eval: dataset has " + std::to_string(data.dim()) +
                    " features but the checkpoint was trained with " +
                    std::to_string(ckpt.fingerprint.d));
    }
    check(data.n_classes <= ckpt.spec.output_dim(),
          "eval: dataset has more classes than the model outputs");

    ModelSampler sampler = make_predictive_sampler(ckpt);
    Rng rng(opts.eval_seed);
    const Mat probs = ensemble_predict(sampler, data.features, opts.n_samples, rng);
    auto [e, table] = ece(probs, data.labels, opts.ece_bins);
    print_metric("accuracy", accuracy(probs, data.labels));
    print_metric("nll", nll(probs, data.labels));
    print_metric("ece", e);
    std::printf("n_samples %d\n", opts.n_samples);
    if (!opts.reliability_out.empty()) {
        std::ofstream out(opts.reliability_out, std::ios::binary);
        check(static_cast<bool>(out), "eval: cannot open " + opts.reliability_out);
        write_reliability_csv(out, table);
    }
    return 0;
}

struct SharpnessOpts {
    std::string ckpt_path;
    double rho = 0.05;
    int samples = 5;
    int steps = 10;
    std::uint64_t eval_seed = 0;
};

int cmd_sharpness(const SharpnessOpts& opts, const DataOpts& data_opts) {
    Checkpoint ckpt = load_checkpoint(opts.ckpt_path);
    Dataset data = make_dataset(data_opts, /*test_side=*/true);
    if (static_cast<long>(data.dim()) != ckpt.fingerprint.d) {
        throw Error("sharpness: dataset feature count does not match the checkpoint");
    }
    const MlpSpec spec = ckpt.spec;
    const auto layout = make_layout(spec);
    auto loss_grad = [&](const Vec& theta) -> std::pair<double, Vec> {
        Vec g;
        const double l = mlp_loss(spec, FlatParams{theta, layout}, data.features, data.labels, &g);
        return {l, g};
    };
    auto sample_params = make_param_sampler(ckpt);
    Rng rng(opts.eval_seed);
    double sum = 0.0;
    for (int s = 0; s < opts.samples; ++s) {
        const Vec theta = sample_params(rng);
        const double sh = sharpness(loss_grad, theta, opts.rho, opts.steps);
        std::printf("sharpness[%d] %.9g\n", s, sh);
        sum += sh;
    }
    print_metric("mean_sharpness", sum / opts.samples);
    return 0;
}

struct BoundOpts {
    double k = 1;
    double n = 2;
    double R = 1;
    double rho = 0.05;
    double delta = 0.05;
    double omega = 0.0;
};

int cmd_bound(const BoundOpts& opts) {
    check(opts.n >= 2, "bound: n must be >= 2");
    const CoveringBound cover = covering_number_bound(opts.R, opts.k, opts.rho);
    const double sigma = sigma_from_rho_log(opts.rho, opts.k, cover.log_value, opts.n);
    const BoundBreakdown b = pac_bayes_bound_term(
        {opts.k, opts.n, opts.R, opts.rho, opts.delta, opts.omega});
    print_metric("log_covering", cover.log_value);
    print_metric("sigma", sigma);
    print_metric("inv_sqrt_n", b.inv_sqrt_n);
    print_metric("sqrt_term", b.sqrt_term);
    print_metric("total", b.total);
    return 0;
}

struct GibbsOpts {
    std::string grid_path;
    double lambda = 1.0;
    double resolution = 1e-3;
    bool no_oracle = false;
};

int cmd_gibbs(const GibbsOpts& opts) {
    std::ifstream in(opts.grid_path, std::ios::binary);
    check(static_cast<bool>(in), "gibbs: cannot open " + opts.grid_path);
    GibbsGrid grid;
    std::vector<double> losses, priors;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || (row == 1 && line.find_first_of("0123456789") == std::string::npos)) {
            continue;  // optional header
        }
        const auto comma = line.find(',');
        check(comma != std::string::npos,
              "gibbs: row " + std::to_string(row) + " needs loss,prior_mass");
        try {
            losses.push_back(std::stod(line.substr(0, comma)));
            priors.push_back(std::stod(line.substr(comma + 1)));
        } catch (const std::exception&) {
            throw Error("gibbs: non-numeric value at row " + std::to_string(row));
        }
    }
    check(!losses.empty(), "gibbs: empty grid");
    grid.loss = Eigen::Map<Vec>(losses.data(), static_cast<Eigen::Index>(losses.size()));
    grid.prior_mass = Eigen::Map<Vec>(priors.data(), static_cast<Eigen::Index>(priors.size()));
    for (std::size_t i = 0; i < losses.size(); ++i) grid.points.push_back("p" + std::to_string(i));
    grid.validate();

    const Vec closed = gibbs_posterior_grid(grid, opts.lambda);
    std::printf("closed_form");
    for (Eigen::Index i = 0; i < closed.size(); ++i) std::printf(" %.9g", closed(i));
    std::printf("\n");
    if (!opts.no_oracle) {
        check(grid.loss.size() <= 4, "gibbs: oracle only supports grids of up to 4 points");
        const Vec oracle = gibbs_oracle(grid, opts.lambda, opts.resolution);
        std::printf("oracle");
        for (Eigen::Index i = 0; i < oracle.size(); ++i) std::printf(" %.9g", oracle(i));
        std::printf("\n");
        print_metric("total_variation", 0.5 * (closed - oracle).cwiseAbs().sum());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sharpness-aware Bayesian inference for small dense classifiers"};
    app.require_subcommand(1);

    TrainOpts train_opts;
    DataOpts train_data;
    auto* train = app.add_subcommand("train", "Train a posterior and write a checkpoint");
    train->set_config("--config");
    train->add_option("--method", train_opts.method,
                      "sgvb|sgvb-lrt|sgld|swag|swag-diag|mc-dropout|deep-ensemble")
        ->capture_default_str();
    train->add_flag("--flat", train_opts.flat, "perturbed-gradient (sharpness-aware) updates");
    train->add_option("--geometry", train_opts.geometry, "identity|mu-over-sigma")
        ->capture_default_str();
    train->add_option("--rho", train_opts.rho, "perturbation radius")->capture_default_str();
    train->add_option("--lambda", train_opts.cfg.lambda, "loss weight; < 0 means n")
        ->capture_default_str();
    train->add_option("--lr", train_opts.cfg.learning_rate)->capture_default_str();
    train->add_option("--epochs", train_opts.cfg.epochs)->capture_default_str();
    train->add_option("--batch-size", train_opts.cfg.batch_size)->capture_default_str();
    train->add_option("--seed", train_opts.cfg.seed)->capture_default_str();
    train->add_option("--prior-tau", train_opts.cfg.prior_tau, "prior stddev; <= 0 disables")
        ->capture_default_str();
    train->add_option("--sgld-temperature", train_opts.cfg.sgld_temperature, "< 0 means 1/n")
        ->capture_default_str();
    train->add_option("--swag-start", train_opts.cfg.swag_collect_start_epoch,
                      "collection start epoch; < 0 means 54% of epochs")
        ->capture_default_str();
    train->add_option("--swag-rank", train_opts.cfg.swag_rank)->capture_default_str();
    train->add_option("--ensemble-size", train_opts.cfg.ensemble_size)->capture_default_str();
    train->add_option("--keep-prob", train_opts.cfg.keep_prob)->capture_default_str();
    train->add_option("--mc-train-samples", train_opts.cfg.mc_train_samples)->capture_default_str();
    train->add_option("--hidden", train_opts.hidden, "hidden widths, comma-separated")
        ->capture_default_str();
    train->add_option("--activation", train_opts.activation, "relu|tanh")->capture_default_str();
    train->add_option("--out", train_opts.out, "checkpoint path")->capture_default_str();
    add_data_opts(train, &train_data);

    EvalOpts eval_opts;
    DataOpts eval_data;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    eval->set_config("--config");
    eval->add_option("--checkpoint", eval_opts.ckpt_path)->required();
    eval->add_option("--n-samples", eval_opts.n_samples)->capture_default_str();
    eval->add_option("--ece-bins", eval_opts.ece_bins)->capture_default_str();
    eval->add_option("--eval-seed", eval_opts.eval_seed)->capture_default_str();
    eval->add_option("--reliability-out", eval_opts.reliability_out, "reliability table CSV path");
    add_data_opts(eval, &eval_data);

    SharpnessOpts sharp_opts;
    DataOpts sharp_data;
    auto* sharp = app.add_subcommand("sharpness", "Sharpness of sampled models");
    sharp->set_config("--config");
    sharp->add_option("--checkpoint", sharp_opts.ckpt_path)->required();
    sharp->add_option("--rho", sharp_opts.rho)->capture_default_str();
    sharp->add_option("--samples", sharp_opts.samples)->capture_default_str();
    sharp->add_option("--steps", sharp_opts.steps)->capture_default_str();
    sharp->add_option("--eval-seed", sharp_opts.eval_seed)->capture_default_str();
    add_data_opts(sharp, &sharp_data);

    BoundOpts bound_opts;
    auto* bound = app.add_subcommand("bound", "Generalization bound components");
    bound->add_option("--k", bound_opts.k)->capture_default_str();
    bound->add_option("--n", bound_opts.n)->capture_default_str();
    bound->add_option("--R", bound_opts.R)->capture_default_str();
    bound->add_option("--rho", bound_opts.rho)->capture_default_str();
    bound->add_option("--delta", bound_opts.delta)->capture_default_str();
    bound->add_option("--omega", bound_opts.omega)->capture_default_str();

    GibbsOpts gibbs_opts;
    auto* gibbs = app.add_subcommand("gibbs", "Closed-form vs oracle grid posterior");
    gibbs->add_option("--grid", gibbs_opts.grid_path, "CSV of loss,prior_mass rows")->required();
    gibbs->add_option("--lambda", gibbs_opts.lambda)->capture_default_str();
    gibbs->add_option("--resolution", gibbs_opts.resolution)->capture_default_str();
    gibbs->add_flag("--no-oracle", gibbs_opts.no_oracle, "skip the discretized oracle");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train->parsed()) return cmd_train(train_opts, train_data);
        if (eval->parsed()) return cmd_eval(eval_opts, eval_data);
        if (sharp->parsed()) return cmd_sharpness(sharp_opts, sharp_data);
        if (bound->parsed()) return cmd_bound(bound_opts);
        if (gibbs->parsed()) return cmd_gibbs(gibbs_opts);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
