#pragma once

#include <optional>
#include <string>

#include "sabnn/data.hpp"
#include "sabnn/eval.hpp"
#include "sabnn/trainers.hpp"

namespace sabnn {

struct DatasetFingerprint {
    long n = 0;
    long d = 0;
    int n_classes = 0;
    std::uint64_t hash = 0;
};

DatasetFingerprint fingerprint_of(const Dataset& ds);

// Versioned training artifact. Exactly one payload member is set and it
// matches the method tag.
struct Checkpoint {
    int format_version = 1;
    Method method = Method::Sgvb;
    TrainConfig config;
    MlpSpec spec;
    DatasetFingerprint fingerprint;

    std::optional<GaussianPosterior> gaussian;
    std::optional<SwagStats> swag;
    std::optional<ParticleSet> particles;
    std::optional<std::vector<FlatParams>> members;

    void validate() const;
};

std::string method_name(Method m);
Method parse_method(const std::string& name);

std::string geometry_name(GeometryKind g);
GeometryKind parse_geometry(const std::string& name);

// Canonical JSON: sorted keys, no insignificant whitespace, shortest
// round-trip decimals. save -> load -> save is byte-identical.
std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// One posterior draw of class probabilities. Gaussian payloads sample
// weights (or pre-activations for the LRT method), SWAG draws from the
// fitted Gaussian, particles and ensemble members are cycled in fixed
// order, and dropout redraws masks at prediction time.
ModelSampler make_predictive_sampler(const Checkpoint& ckpt);

// One posterior draw of a flat parameter vector, for sharpness and
// curvature evaluation. Dropout returns its point estimate.
std::function<Vec(Rng&)> make_param_sampler(const Checkpoint& ckpt);

}  // namespace sabnn
