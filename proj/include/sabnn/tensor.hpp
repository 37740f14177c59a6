#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <numeric>
#include <vector>

#include "sabnn/error.hpp"

namespace sabnn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using VecI = Eigen::VectorXi;

// Dense row-major tensor used at module boundaries; internally most math
// runs on Eigen matrices.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        check(size() == data.size(), "Tensor: data length does not match shape");
    }

    std::size_t size() const {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               [](std::size_t a, std::size_t b) { return a * b; });
    }

    static Tensor from_matrix(const Mat& m) {
        Tensor t;
        t.shape = {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
        t.data.resize(t.size());
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                t.data[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
        return t;
    }

    Mat matrix() const {
        check(shape.size() == 2, "Tensor: matrix() requires rank 2");
        Mat m(shape[0], shape[1]);
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                m(i, j) = data[static_cast<std::size_t>(i * m.cols() + j)];
        return m;
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

}  // namespace sabnn
