#include "sabnn/tape.hpp"

#include <cmath>
#include <sstream>

namespace sabnn {

namespace {
std::string shape_of(const Mat& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}
}  // namespace

Tape::NodeId Tape::push(Mat value, std::string op) {
    nodes_.push_back(Node{std::move(value), Mat(), std::move(op)});
    return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::leaf(Mat value) { return push(std::move(value), "leaf"); }

Tape::NodeId Tape::leaf(const Vec& value) {
    Mat m(value.size(), 1);
    m.col(0) = value;
    return push(std::move(m), "leaf");
}

void Tape::require_shape(NodeId a, NodeId b, const char* op) const {
    const Mat& va = value(a);
    const Mat& vb = value(b);
    if (va.rows() != vb.rows() || va.cols() != vb.cols()) {
        throw Error(std::string(op) + ": shape mismatch " + shape_of(va) + " vs " + shape_of(vb));
    }
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    const Mat& va = value(a);
    const Mat& vb = value(b);
    if (va.cols() != vb.rows()) {
        throw Error("matmul: inner dimension mismatch " + shape_of(va) + " * " + shape_of(vb));
    }
    NodeId out = push(va * vb, "matmul");
    backward_ops_.push_back([this, a, b, out] {
        const Mat& g = grad_ref(out);
        grad_ref(a) += g * value(b).transpose();
        grad_ref(b) += value(a).transpose() * g;
    });
    return out;
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    require_shape(a, b, "add");
    NodeId out = push(value(a) + value(b), "add");
    backward_ops_.push_back([this, a, b, out] {
        grad_ref(a) += grad_ref(out);
        grad_ref(b) += grad_ref(out);
    });
    return out;
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
    require_shape(a, b, "mul");
    NodeId out = push(value(a).cwiseProduct(value(b)), "mul");
    backward_ops_.push_back([this, a, b, out] {
        grad_ref(a) += grad_ref(out).cwiseProduct(value(b));
        grad_ref(b) += grad_ref(out).cwiseProduct(value(a));
    });
    return out;
}

Tape::NodeId Tape::add_bias(NodeId a, NodeId bias) {
    const Mat& va = value(a);
    const Mat& vb = value(bias);
    if (vb.rows() != 1 || vb.cols() != va.cols()) {
        throw Error("add_bias: bias must be 1x" + std::to_string(va.cols()) + ", got " + shape_of(vb));
    }
    Mat out_v = va.rowwise() + vb.row(0);
    NodeId out = push(std::move(out_v), "add_bias");
    backward_ops_.push_back([this, a, bias, out] {
        grad_ref(a) += grad_ref(out);
        grad_ref(bias).row(0) += grad_ref(out).colwise().sum();
    });
    return out;
}

Tape::NodeId Tape::mul_const(NodeId a, const Mat& c) {
    const Mat& va = value(a);
    if (va.rows() != c.rows() || va.cols() != c.cols()) {
        throw Error("mul_const: shape mismatch " + shape_of(va) + " vs " + shape_of(c));
    }
    NodeId out = push(va.cwiseProduct(c), "mul_const");
    Mat cc = c;
    backward_ops_.push_back([this, a, out, cc = std::move(cc)] {
        grad_ref(a) += grad_ref(out).cwiseProduct(cc);
    });
    return out;
}

Tape::NodeId Tape::scale(NodeId a, double s) {
    NodeId out = push(value(a) * s, "scale");
    backward_ops_.push_back([this, a, out, s] { grad_ref(a) += grad_ref(out) * s; });
    return out;
}

Tape::NodeId Tape::relu(NodeId a) {
    // subgradient at exactly 0 is 0
    NodeId out = push(value(a).cwiseMax(0.0), "relu");
    backward_ops_.push_back([this, a, out] {
        grad_ref(a) += grad_ref(out).cwiseProduct(
            (value(a).array() > 0.0).cast<double>().matrix());
    });
    return out;
}

Tape::NodeId Tape::tanh(NodeId a) {
    NodeId out = push(value(a).array().tanh().matrix(), "tanh");
    backward_ops_.push_back([this, a, out] {
        grad_ref(a) += grad_ref(out).cwiseProduct(
            (1.0 - value(out).array().square()).matrix());
    });
    return out;
}

Tape::NodeId Tape::exp(NodeId a) {
    NodeId out = push(value(a).array().exp().matrix(), "exp");
    backward_ops_.push_back([this, a, out] {
        grad_ref(a) += grad_ref(out).cwiseProduct(value(out));
    });
    return out;
}

Tape::NodeId Tape::square(NodeId a) {
    NodeId out = push(value(a).array().square().matrix(), "square");
    backward_ops_.push_back([this, a, out] {
        grad_ref(a) += 2.0 * grad_ref(out).cwiseProduct(value(a));
    });
    return out;
}

Tape::NodeId Tape::sqrt(NodeId a) {
    const Mat& va = value(a);
    if ((va.array() < 0.0).any()) {
        throw Error("sqrt: negative input");
    }
    NodeId out = push(va.array().sqrt().matrix(), "sqrt");
    backward_ops_.push_back([this, a, out] {
        // guard the derivative at 0
        Mat denom = value(out).cwiseMax(1e-300);
        grad_ref(a) += grad_ref(out).cwiseQuotient(2.0 * denom);
    });
    return out;
}

Tape::NodeId Tape::reduce_mean(NodeId a) {
    // copy before push: push can reallocate the node storage
    const double inv_n = 1.0 / static_cast<double>(value(a).size());
    Mat out_v(1, 1);
    out_v(0, 0) = value(a).mean();
    NodeId out = push(std::move(out_v), "reduce_mean");
    backward_ops_.push_back([this, a, out, inv_n] {
        grad_ref(a).array() += grad_ref(out)(0, 0) * inv_n;
    });
    return out;
}

Tape::NodeId Tape::softmax_cross_entropy(NodeId logits, const VecI& labels) {
    const Mat& z = value(logits);
    if (labels.size() != z.rows()) {
        throw Error("softmax_cross_entropy: labels length " + std::to_string(labels.size()) +
                    " does not match batch " + std::to_string(z.rows()));
    }
    const Eigen::Index n = z.rows();
    Mat probs(z.rows(), z.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = labels(i);
        if (y < 0 || y >= z.cols()) {
            throw Error("softmax_cross_entropy: label out of range at row " + std::to_string(i));
        }
        const double m = z.row(i).maxCoeff();
        Eigen::RowVectorXd e = (z.row(i).array() - m).exp();
        const double sum = e.sum();
        probs.row(i) = e / sum;
        loss += -(z(i, y) - m - std::log(sum));
    }
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss)) {
        throw Error("softmax_cross_entropy: non-finite loss");
    }
    Mat out_v(1, 1);
    out_v(0, 0) = loss;
    NodeId out = push(std::move(out_v), "softmax_cross_entropy");
    VecI lab = labels;
    backward_ops_.push_back([this, logits, out, probs = std::move(probs), lab = std::move(lab)] {
        const double g = grad_ref(out)(0, 0) / static_cast<double>(probs.rows());
        Mat d = probs;
        for (Eigen::Index i = 0; i < d.rows(); ++i) d(i, lab(i)) -= 1.0;
        grad_ref(logits) += g * d;
    });
    return out;
}

Tape::NodeId Tape::squared_error(NodeId pred, const Mat& target) {
    const Mat& p = value(pred);
    if (p.rows() != target.rows() || p.cols() != target.cols()) {
        throw Error("squared_error: shape mismatch " + shape_of(p) + " vs " + shape_of(target));
    }
    Mat diff = p - target;
    Mat out_v(1, 1);
    out_v(0, 0) = diff.array().square().mean();
    NodeId out = push(std::move(out_v), "squared_error");
    const double inv_n = 1.0 / static_cast<double>(diff.size());
    backward_ops_.push_back([this, pred, out, diff = std::move(diff), inv_n] {
        grad_ref(pred) += grad_ref(out)(0, 0) * 2.0 * inv_n * diff;
    });
    return out;
}

double Tape::scalar(NodeId id) const {
    const Mat& v = value(id);
    check(v.size() == 1, "scalar: node is not 1x1");
    return v(0, 0);
}

Mat Tape::softmax(NodeId logits) const {
    const Mat& z = value(logits);
    Mat probs(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double m = z.row(i).maxCoeff();
        Eigen::RowVectorXd e = (z.row(i).array() - m).exp();
        probs.row(i) = e / e.sum();
    }
    return probs;
}

void Tape::backward(NodeId loss) {
    check(!backward_done_, "backward: tape already consumed");
    check(value(loss).size() == 1, "backward: loss must be scalar");
    for (auto& n : nodes_) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    nodes_[static_cast<std::size_t>(loss)].grad(0, 0) = 1.0;
    for (auto it = backward_ops_.rbegin(); it != backward_ops_.rend(); ++it) (*it)();
    backward_done_ = true;
}

const Mat& Tape::grad(NodeId id) const {
    check(backward_done_, "grad: backward() has not been run");
    return nodes_.at(static_cast<std::size_t>(id)).grad;
}

}  // namespace sabnn
