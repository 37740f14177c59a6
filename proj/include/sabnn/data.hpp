#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "sabnn/rng.hpp"
#include "sabnn/tensor.hpp"

namespace sabnn {

struct Normalization {
    Vec mean;
    Vec std;
};

struct Dataset {
    Mat features;  // n x d
    VecI labels;   // values in [0, n_classes)
    int n_classes = 0;
    std::optional<Normalization> normalization;

    Eigen::Index size() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }
    void validate() const;
};

// Two interleaved half-circles of n/2 points each (radius 1; the second
// moon is the half-circle rotated by pi and shifted by (1, -0.5)), plus
// isotropic Gaussian noise. Labels 0/1.
Dataset gen_two_moons(int n, double noise_std, std::uint64_t seed);

// Equal-sized isotropic Gaussian clusters, one class per center.
Dataset gen_gaussian_blobs(int n, const std::vector<Vec>& centers, double spread,
                           std::uint64_t seed);

Dataset load_csv(const std::string& path, bool has_header);
void save_csv(const std::string& path, const Dataset& ds, bool with_header);
std::string dataset_to_csv(const Dataset& ds, bool with_header);

// Deterministic shuffled split; normalization fit on the train side only
// and applied to both.
std::pair<Dataset, Dataset> split_normalize(const Dataset& ds, double train_fraction,
                                            std::uint64_t seed);

// 64-bit FNV-1a over the canonical CSV bytes.
std::uint64_t dataset_fingerprint(const Dataset& ds);
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace sabnn
