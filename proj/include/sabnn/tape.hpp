#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sabnn/tensor.hpp"

namespace sabnn {

// Reverse-mode autodiff tape over dense matrices. Nodes are appended in
// forward order; backward() replays the recorded ops in exact reverse
// order, so gradient accumulation order is fixed and runs are bitwise
// reproducible.
//
// A tape is single-owner and single-use: build a forward pass, call
// backward() once, read gradients.
class Tape {
public:
    using NodeId = int;

    NodeId leaf(Mat value);
    NodeId leaf(const Vec& value);  // stored as a column

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId add_bias(NodeId a, NodeId bias);       // bias is 1 x cols, broadcast over rows
    NodeId mul_const(NodeId a, const Mat& c);     // elementwise by a fixed matrix
    NodeId scale(NodeId a, double s);
    NodeId relu(NodeId a);
    NodeId tanh(NodeId a);
    NodeId exp(NodeId a);
    NodeId square(NodeId a);
    NodeId sqrt(NodeId a);
    NodeId reduce_mean(NodeId a);                 // scalar (1x1)
    // mean cross-entropy of softmax(logits) against integer labels; scalar
    NodeId softmax_cross_entropy(NodeId logits, const VecI& labels);
    // mean over all elements of (pred - target)^2; scalar
    NodeId squared_error(NodeId pred, const Mat& target);

    const Mat& value(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
    double scalar(NodeId id) const;
    Mat softmax(NodeId logits) const;  // forward-only convenience

    void backward(NodeId loss);
    const Mat& grad(NodeId id) const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        std::string op;
    };

    NodeId push(Mat value, std::string op);
    Mat& grad_ref(NodeId id) { return nodes_[static_cast<std::size_t>(id)].grad; }
    void require_shape(NodeId a, NodeId b, const char* op) const;

    std::vector<Node> nodes_;
    std::vector<std::function<void()>> backward_ops_;
    bool backward_done_ = false;
};

}  // namespace sabnn
