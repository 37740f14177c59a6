#pragma once

#include <vector>

#include "sabnn/rng.hpp"
#include "sabnn/tape.hpp"
#include "sabnn/tensor.hpp"

namespace sabnn {

enum class Activation { Relu, Tanh };

// Fully-connected architecture: widths = {input, hidden..., output},
// raw logits at the output. Biases are separate slices in the flat
// parameter vector.
struct MlpSpec {
    std::vector<int> widths;
    Activation activation = Activation::Relu;

    int input_dim() const { return widths.front(); }
    int output_dim() const { return widths.back(); }
    int n_layers() const { return static_cast<int>(widths.size()) - 1; }
    std::size_t param_count() const;
    void validate() const;
};

struct LayerSlice {
    int in = 0;
    int out = 0;
    std::ptrdiff_t w_offset = 0;  // in*out values, row-major (in rows)
    std::ptrdiff_t b_offset = 0;  // out values
};

std::vector<LayerSlice> make_layout(const MlpSpec& spec);

// Flattened parameter vector with a fixed layer-shape map.
struct FlatParams {
    Vec values;
    std::vector<LayerSlice> layout;

    Mat weight(int layer) const;
    Eigen::RowVectorXd bias(int layer) const;

    static FlatParams zeros(const MlpSpec& spec);
};

// Glorot-uniform weights, zero biases.
FlatParams init_params(const MlpSpec& spec, Rng& rng);

// Per-hidden-layer dropout keep masks (entries 0 or 1), batch x width.
using DropoutMasks = std::vector<Mat>;
DropoutMasks draw_dropout_masks(const MlpSpec& spec, Eigen::Index batch, double keep_prob, Rng& rng);

// Builds the forward pass on a tape and returns the logits node.
// param_nodes receives one leaf per layout slice (W0, b0, W1, b1, ...).
// When masks is non-null, inverted dropout is applied to each hidden
// activation.
Tape::NodeId build_mlp(Tape& tape, const MlpSpec& spec, const FlatParams& params, const Mat& batch,
                       std::vector<Tape::NodeId>* param_nodes = nullptr,
                       const DropoutMasks* masks = nullptr, double keep_prob = 1.0);

// Logits via the tape (forward only).
Mat mlp_forward(const MlpSpec& spec, const FlatParams& params, const Mat& batch);

Mat dropout_forward(const MlpSpec& spec, const FlatParams& params, const Mat& batch,
                    double keep_prob, Rng& rng);

// Mean softmax cross-entropy over the batch; fills grad (same layout as
// params) when non-null.
double mlp_loss(const MlpSpec& spec, const FlatParams& params, const Mat& batch, const VecI& labels,
                Vec* grad = nullptr, const DropoutMasks* masks = nullptr, double keep_prob = 1.0);

// Collects per-slice leaf gradients back into one flat vector.
Vec collect_param_grads(const Tape& tape, const std::vector<Tape::NodeId>& param_nodes,
                        const std::vector<LayerSlice>& layout);

}  // namespace sabnn
