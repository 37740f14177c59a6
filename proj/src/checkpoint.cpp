#include "sabnn/checkpoint.hpp"

#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "sabnn/error.hpp"

namespace sabnn {

using json = nlohmann::json;

namespace {

json vec_to_json(const Vec& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

Vec vec_from_json(const json& arr) {
    check(arr.is_array(), "checkpoint: expected a number array");
    Vec v(static_cast<Eigen::Index>(arr.size()));
    Eigen::Index i = 0;
    for (const auto& x : arr) {
        check(x.is_number(), "checkpoint: non-numeric array entry");
        v(i++) = x.get<double>();
    }
    return v;
}

json config_to_json(const TrainConfig& cfg) {
    json j;
    j["method"] = method_name(cfg.method);
    j["flat"] = cfg.flat;
    j["geometry"] = geometry_name(cfg.geometry);
    j["rho"] = cfg.rho;
    j["lambda"] = cfg.lambda;
    j["learning_rate"] = cfg.learning_rate;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["seed"] = cfg.seed;
    j["prior_tau"] = cfg.prior_tau;
    j["sgld_temperature"] = cfg.sgld_temperature;
    j["swag_collect_start_epoch"] = cfg.swag_collect_start_epoch;
    j["swag_rank"] = cfg.swag_rank;
    j["ensemble_size"] = cfg.ensemble_size;
    j["keep_prob"] = cfg.keep_prob;
    j["mc_train_samples"] = cfg.mc_train_samples;
    j["schedule"] = cfg.schedule == LrSchedule::Cosine ? "cosine" : "constant";
    return j;
}

TrainConfig config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.method = parse_method(j.at("method").get<std::string>());
    cfg.flat = j.at("flat").get<bool>();
    cfg.geometry = parse_geometry(j.at("geometry").get<std::string>());
    cfg.rho = j.at("rho").get<double>();
    cfg.lambda = j.at("lambda").get<double>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.prior_tau = j.at("prior_tau").get<double>();
    cfg.sgld_temperature = j.at("sgld_temperature").get<double>();
    cfg.swag_collect_start_epoch = j.at("swag_collect_start_epoch").get<int>();
    cfg.swag_rank = j.at("swag_rank").get<int>();
    cfg.ensemble_size = j.at("ensemble_size").get<int>();
    cfg.keep_prob = j.at("keep_prob").get<double>();
    cfg.mc_train_samples = j.at("mc_train_samples").get<int>();
    const std::string sched = j.at("schedule").get<std::string>();
    if (sched == "cosine") {
        cfg.schedule = LrSchedule::Cosine;
    } else if (sched == "constant") {
        cfg.schedule = LrSchedule::Constant;
    } else {
        throw Error("checkpoint: unknown schedule '" + sched + "'");
    }
    return cfg;
}

}  // namespace

DatasetFingerprint fingerprint_of(const Dataset& ds) {
    DatasetFingerprint fp;
    fp.n = static_cast<long>(ds.size());
    fp.d = static_cast<long>(ds.dim());
    fp.n_classes = ds.n_classes;
    fp.hash = dataset_fingerprint(ds);
    return fp;
}

void Checkpoint::validate() const {
    check(format_version == 1, "checkpoint: unsupported format_version");
    spec.validate();
    const int set = (gaussian ? 1 : 0) + (swag ? 1 : 0) + (particles ? 1 : 0) + (members ? 1 : 0);
    check(set == 1, "checkpoint: exactly one payload must be set");
    switch (method) {
        case Method::Sgvb:
        case Method::SgvbLrt:
            check(gaussian.has_value(), "checkpoint: method expects a Gaussian payload");
            break;
        case Method::Sgld:
            check(particles.has_value(), "checkpoint: method expects a particle payload");
            break;
        case Method::Swag:
        case Method::SwagDiag:
            check(swag.has_value(), "checkpoint: method expects SWAG statistics");
            break;
        case Method::McDropout:
            check(members.has_value() && members->size() == 1,
                  "checkpoint: dropout expects a single parameter vector");
            break;
        case Method::DeepEnsemble:
            check(members.has_value() && !members->empty(),
                  "checkpoint: ensemble expects member parameter vectors");
            break;
    }
}

std::string method_name(Method m) {
    switch (m) {
        case Method::Sgvb: return "sgvb";
        case Method::SgvbLrt: return "sgvb-lrt";
        case Method::Sgld: return "sgld";
        case Method::Swag: return "swag";
        case Method::SwagDiag: return "swag-diag";
        case Method::McDropout: return "mc-dropout";
        case Method::DeepEnsemble: return "deep-ensemble";
    }
    throw Error("method_name: bad method tag");
}

Method parse_method(const std::string& name) {
    if (name == "sgvb") return Method::Sgvb;
    if (name == "sgvb-lrt") return Method::SgvbLrt;
    if (name == "sgld") return Method::Sgld;
    if (name == "swag") return Method::Swag;
    if (name == "swag-diag") return Method::SwagDiag;
    if (name == "mc-dropout") return Method::McDropout;
    if (name == "deep-ensemble") return Method::DeepEnsemble;
    throw Error("unknown method '" + name + "'");
}

std::string geometry_name(GeometryKind g) {
    return g == GeometryKind::MuOverSigma ? "mu-over-sigma" : "identity";
}

GeometryKind parse_geometry(const std::string& name) {
    if (name == "identity") return GeometryKind::Identity;
    if (name == "mu-over-sigma") return GeometryKind::MuOverSigma;
    throw Error("unknown geometry '" + name + "'");
}

std::string checkpoint_to_json(const Checkpoint& ckpt) {
    ckpt.validate();
    json j;
    j["format_version"] = ckpt.format_version;
    j["method"] = method_name(ckpt.method);
    j["config"] = config_to_json(ckpt.config);
    j["seed"] = ckpt.config.seed;

    json spec;
    spec["widths"] = ckpt.spec.widths;
    spec["activation"] = ckpt.spec.activation == Activation::Tanh ? "tanh" : "relu";
    j["mlp"] = spec;

    json fp;
    fp["n"] = ckpt.fingerprint.n;
    fp["d"] = ckpt.fingerprint.d;
    fp["n_classes"] = ckpt.fingerprint.n_classes;
    fp["hash"] = ckpt.fingerprint.hash;
    j["dataset"] = fp;

    json payload;
    if (ckpt.gaussian) {
        payload["kind"] = "gaussian";
        payload["mu"] = vec_to_json(ckpt.gaussian->mu);
        payload["log_sigma"] = vec_to_json(ckpt.gaussian->log_sigma);
    } else if (ckpt.swag) {
        payload["kind"] = "swag";
        payload["count"] = ckpt.swag->count;
        payload["rank"] = ckpt.swag->rank;
        payload["mean"] = vec_to_json(ckpt.swag->mean);
        payload["mean_sq"] = vec_to_json(ckpt.swag->mean_sq);
        json devs = json::array();
        for (const Vec& d : ckpt.swag->deviations) devs.push_back(vec_to_json(d));
        payload["deviations"] = devs;
    } else if (ckpt.particles) {
        payload["kind"] = "particles";
        json parts = json::array();
        for (const Vec& p : ckpt.particles->particles) parts.push_back(vec_to_json(p));
        payload["particles"] = parts;
        payload["steps"] = ckpt.particles->steps;
    } else {
        payload["kind"] = "members";
        json parts = json::array();
        for (const FlatParams& m : *ckpt.members) parts.push_back(vec_to_json(m.values));
        payload["members"] = parts;
    }
    j["payload"] = payload;
    return j.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("checkpoint: malformed JSON: ") + e.what());
    }
    Checkpoint ckpt;
    try {
        ckpt.format_version = j.at("format_version").get<int>();
        ckpt.method = parse_method(j.at("method").get<std::string>());
        ckpt.config = config_from_json(j.at("config"));

        const json& spec = j.at("mlp");
        ckpt.spec.widths = spec.at("widths").get<std::vector<int>>();
        const std::string act = spec.at("activation").get<std::string>();
        if (act == "tanh") {
            ckpt.spec.activation = Activation::Tanh;
        } else if (act == "relu") {
            ckpt.spec.activation = Activation::Relu;
        } else {
            throw Error("checkpoint: unknown activation '" + act + "'");
        }

        const json& fp = j.at("dataset");
        ckpt.fingerprint.n = fp.at("n").get<long>();
        ckpt.fingerprint.d = fp.at("d").get<long>();
        ckpt.fingerprint.n_classes = fp.at("n_classes").get<int>();
        ckpt.fingerprint.hash = fp.at("hash").get<std::uint64_t>();

        const auto layout = make_layout(ckpt.spec);
        const json& payload = j.at("payload");
        const std::string kind = payload.at("kind").get<std::string>();
        if (kind == "gaussian") {
            GaussianPosterior g;
            g.mu = vec_from_json(payload.at("mu"));
            g.log_sigma = vec_from_json(payload.at("log_sigma"));
            g.layout = layout;
            ckpt.gaussian = std::move(g);
        } else if (kind == "swag") {
            SwagStats s;
            s.count = payload.at("count").get<long>();
            s.rank = payload.at("rank").get<int>();
            s.mean = vec_from_json(payload.at("mean"));
            s.mean_sq = vec_from_json(payload.at("mean_sq"));
            for (const auto& d : payload.at("deviations")) s.deviations.push_back(vec_from_json(d));
            ckpt.swag = std::move(s);
        } else if (kind == "particles") {
            ParticleSet p;
            for (const auto& v : payload.at("particles")) p.particles.push_back(vec_from_json(v));
            p.steps = payload.at("steps").get<std::vector<long>>();
            ckpt.particles = std::move(p);
        } else if (kind == "members") {
            std::vector<FlatParams> members;
            for (const auto& v : payload.at("members")) {
                members.push_back(FlatParams{vec_from_json(v), layout});
            }
            ckpt.members = std::move(members);
        } else {
            throw Error("checkpoint: unknown payload kind '" + kind + "'");
        }
    } catch (const json::exception& e) {
        throw Error(std::string("checkpoint: missing or mistyped field: ") + e.what());
    }
    ckpt.validate();
    const std::size_t expected = ckpt.spec.param_count();
    auto check_len = [&](const Vec& v, const char* what) {
        check(static_cast<std::size_t>(v.size()) == expected,
              std::string("checkpoint: ") + what + " length does not match the architecture");
    };
    if (ckpt.gaussian) {
        check_len(ckpt.gaussian->mu, "mu");
        check_len(ckpt.gaussian->log_sigma, "log_sigma");
    } else if (ckpt.swag) {
        check_len(ckpt.swag->mean, "mean");
        check_len(ckpt.swag->mean_sq, "mean_sq");
        for (const Vec& d : ckpt.swag->deviations) check_len(d, "deviation");
    } else if (ckpt.particles) {
        for (const Vec& p : ckpt.particles->particles) check_len(p, "particle");
    } else {
        for (const FlatParams& m : *ckpt.members) check_len(m.values, "member");
    }
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    check(static_cast<bool>(out), "save_checkpoint: cannot open " + path);
    out << checkpoint_to_json(ckpt) << "\n";
    check(static_cast<bool>(out), "save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(static_cast<bool>(in), "load_checkpoint: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return checkpoint_from_json(buf.str());
}

ModelSampler make_predictive_sampler(const Checkpoint& ckpt) {
    ckpt.validate();
    const MlpSpec spec = ckpt.spec;
    switch (ckpt.method) {
        case Method::Sgvb: {
            GaussianPosterior post = *ckpt.gaussian;
            return [spec, post](const Mat& X, Rng& rng) {
                ReparamSample s = sample_weights_reparam(post, rng);
                return softmax_rows(mlp_forward(spec, s.params, X));
            };
        }
        case Method::SgvbLrt: {
            GaussianPosterior post = *ckpt.gaussian;
            return [spec, post](const Mat& X, Rng& rng) {
                return softmax_rows(local_reparam_forward(post, spec, X, rng));
            };
        }
        case Method::Sgld: {
            ParticleSet set = *ckpt.particles;
            auto layout = make_layout(spec);
            auto idx = std::make_shared<std::size_t>(0);
            return [spec, set, layout, idx](const Mat& X, Rng&) {
                const Vec& theta = set.particles[*idx % set.particles.size()];
                ++*idx;
                return softmax_rows(mlp_forward(spec, FlatParams{theta, layout}, X));
            };
        }
        case Method::Swag:
        case Method::SwagDiag: {
            SwagStats stats = *ckpt.swag;
            const bool diag = ckpt.method == Method::SwagDiag;
            auto layout = make_layout(spec);
            return [spec, stats, layout, diag](const Mat& X, Rng& rng) {
                const Vec theta = swag_sample(stats, rng, diag);
                return softmax_rows(mlp_forward(spec, FlatParams{theta, layout}, X));
            };
        }
        case Method::McDropout: {
            FlatParams params = ckpt.members->front();
            const double keep = ckpt.config.keep_prob;
            return [spec, params, keep](const Mat& X, Rng& rng) {
                return softmax_rows(dropout_forward(spec, params, X, keep, rng));
            };
        }
        case Method::DeepEnsemble: {
            std::vector<FlatParams> members = *ckpt.members;
            auto idx = std::make_shared<std::size_t>(0);
            return [spec, members, idx](const Mat& X, Rng&) {
                const FlatParams& m = members[*idx % members.size()];
                ++*idx;
                return softmax_rows(mlp_forward(spec, m, X));
            };
        }
    }
    throw Error("make_predictive_sampler: bad method tag");
}

std::function<Vec(Rng&)> make_param_sampler(const Checkpoint& ckpt) {
    ckpt.validate();
    switch (ckpt.method) {
        case Method::Sgvb:
        case Method::SgvbLrt: {
            GaussianPosterior post = *ckpt.gaussian;
            return [post](Rng& rng) { return sample_weights_reparam(post, rng).params.values; };
        }
        case Method::Sgld: {
            ParticleSet set = *ckpt.particles;
            auto idx = std::make_shared<std::size_t>(0);
            return [set, idx](Rng&) {
                const Vec& p = set.particles[*idx % set.particles.size()];
                ++*idx;
                return p;
            };
        }
        case Method::Swag:
        case Method::SwagDiag: {
            SwagStats stats = *ckpt.swag;
            const bool diag = ckpt.method == Method::SwagDiag;
            return [stats, diag](Rng& rng) { return swag_sample(stats, rng, diag); };
        }
        case Method::McDropout: {
            Vec theta = ckpt.members->front().values;
            return [theta](Rng&) { return theta; };
        }
        case Method::DeepEnsemble: {
            std::vector<FlatParams> members = *ckpt.members;
            auto idx = std::make_shared<std::size_t>(0);
            return [members, idx](Rng&) {
                const Vec& p = members[*idx % members.size()].values;
                ++*idx;
                return p;
            };
        }
    }
    throw Error("make_param_sampler: bad method tag");
}

}  // namespace sabnn
