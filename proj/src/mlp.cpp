#include "sabnn/mlp.hpp"

#include <cmath>
#include <string>

namespace sabnn {

void MlpSpec::validate() const {
    check(widths.size() >= 2, "MlpSpec: need at least input and output widths");
    for (int w : widths) check(w >= 1, "MlpSpec: all widths must be >= 1");
}

std::size_t MlpSpec::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        n += static_cast<std::size_t>(widths[l]) * static_cast<std::size_t>(widths[l + 1]);
        n += static_cast<std::size_t>(widths[l + 1]);
    }
    return n;
}

std::vector<LayerSlice> make_layout(const MlpSpec& spec) {
    spec.validate();
    std::vector<LayerSlice> layout;
    std::ptrdiff_t off = 0;
    for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
        LayerSlice s;
        s.in = spec.widths[l];
        s.out = spec.widths[l + 1];
        s.w_offset = off;
        off += static_cast<std::ptrdiff_t>(s.in) * s.out;
        s.b_offset = off;
        off += s.out;
        layout.push_back(s);
    }
    return layout;
}

Mat FlatParams::weight(int layer) const {
    const LayerSlice& s = layout.at(static_cast<std::size_t>(layer));
    Mat w(s.in, s.out);
    for (int i = 0; i < s.in; ++i)
        for (int j = 0; j < s.out; ++j) w(i, j) = values(s.w_offset + i * s.out + j);
    return w;
}

Eigen::RowVectorXd FlatParams::bias(int layer) const {
    const LayerSlice& s = layout.at(static_cast<std::size_t>(layer));
    Eigen::RowVectorXd b(s.out);
    for (int j = 0; j < s.out; ++j) b(j) = values(s.b_offset + j);
    return b;
}

FlatParams FlatParams::zeros(const MlpSpec& spec) {
    FlatParams p;
    p.layout = make_layout(spec);
    p.values = Vec::Zero(static_cast<Eigen::Index>(spec.param_count()));
    return p;
}

FlatParams init_params(const MlpSpec& spec, Rng& rng) {
    FlatParams p = FlatParams::zeros(spec);
    for (const LayerSlice& s : p.layout) {
        const double bound = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
        for (int i = 0; i < s.in * s.out; ++i) {
            p.values(s.w_offset + i) = (2.0 * rng.uniform() - 1.0) * bound;
        }
        // biases stay zero
    }
    return p;
}

DropoutMasks draw_dropout_masks(const MlpSpec& spec, Eigen::Index batch, double keep_prob,
                                Rng& rng) {
    check(keep_prob > 0.0 && keep_prob <= 1.0, "dropout: keep_prob must be in (0, 1]");
    DropoutMasks masks;
    for (std::size_t l = 1; l + 1 < spec.widths.size(); ++l) {
        Mat m(batch, spec.widths[l]);
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                m(i, j) = rng.bernoulli(keep_prob) ? 1.0 : 0.0;
        masks.push_back(std::move(m));
    }
    return masks;
}

Tape::NodeId build_mlp(Tape& tape, const MlpSpec& spec, const FlatParams& params, const Mat& batch,
                       std::vector<Tape::NodeId>* param_nodes, const DropoutMasks* masks,
                       double keep_prob) {
    spec.validate();
    check(params.values.size() == static_cast<Eigen::Index>(spec.param_count()),
          "build_mlp: parameter vector does not match architecture");
    if (batch.cols() != spec.input_dim()) {
        throw Error("build_mlp: batch width " + std::to_string(batch.cols()) +
                    " does not match input width " + std::to_string(spec.input_dim()));
    }
    Tape::NodeId h = tape.leaf(batch);
    const int L = spec.n_layers();
    for (int l = 0; l < L; ++l) {
        Tape::NodeId w = tape.leaf(params.weight(l));
        Tape::NodeId b = tape.leaf(Mat(params.bias(l)));
        if (param_nodes) {
            param_nodes->push_back(w);
            param_nodes->push_back(b);
        }
        h = tape.add_bias(tape.matmul(h, w), b);
        if (l + 1 < L) {
            h = (spec.activation == Activation::Relu) ? tape.relu(h) : tape.tanh(h);
            if (masks) {
                const Mat& m = masks->at(static_cast<std::size_t>(l));
                h = tape.mul_const(h, m / keep_prob);
            }
        }
    }
    return h;
}

Mat mlp_forward(const MlpSpec& spec, const FlatParams& params, const Mat& batch) {
    Tape tape;
    return tape.value(build_mlp(tape, spec, params, batch));
}

Mat dropout_forward(const MlpSpec& spec, const FlatParams& params, const Mat& batch,
                    double keep_prob, Rng& rng) {
    if (keep_prob == 1.0) return mlp_forward(spec, params, batch);
    DropoutMasks masks = draw_dropout_masks(spec, batch.rows(), keep_prob, rng);
    Tape tape;
    return tape.value(build_mlp(tape, spec, params, batch, nullptr, &masks, keep_prob));
}

Vec collect_param_grads(const Tape& tape, const std::vector<Tape::NodeId>& param_nodes,
                        const std::vector<LayerSlice>& layout) {
    std::ptrdiff_t total = 0;
    for (const LayerSlice& s : layout) total = std::max(total, s.b_offset + s.out);
    Vec g = Vec::Zero(total);
    check(param_nodes.size() == 2 * layout.size(), "collect_param_grads: node count mismatch");
    for (std::size_t l = 0; l < layout.size(); ++l) {
        const LayerSlice& s = layout[l];
        const Mat& gw = tape.grad(param_nodes[2 * l]);
        const Mat& gb = tape.grad(param_nodes[2 * l + 1]);
        for (int i = 0; i < s.in; ++i)
            for (int j = 0; j < s.out; ++j) g(s.w_offset + i * s.out + j) = gw(i, j);
        for (int j = 0; j < s.out; ++j) g(s.b_offset + j) = gb(0, j);
    }
    return g;
}

double mlp_loss(const MlpSpec& spec, const FlatParams& params, const Mat& batch, const VecI& labels,
                Vec* grad, const DropoutMasks* masks, double keep_prob) {
    Tape tape;
    std::vector<Tape::NodeId> pn;
    Tape::NodeId logits = build_mlp(tape, spec, params, batch, grad ? &pn : nullptr, masks, keep_prob);
    Tape::NodeId loss = tape.softmax_cross_entropy(logits, labels);
    const double value = tape.scalar(loss);
    if (grad) {
        tape.backward(loss);
        *grad = collect_param_grads(tape, pn, params.layout);
    }
    return value;
}

}  // namespace sabnn
