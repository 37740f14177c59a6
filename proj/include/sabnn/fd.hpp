#pragma once

#include <functional>
#include <utility>

#include "sabnn/tensor.hpp"

namespace sabnn {

using LossFn = std::function<double(const Vec&)>;
using GradFn = std::function<Vec(const Vec&)>;
// loss and gradient in one evaluation; the workhorse closure shared by
// trainers, sharpness and eigenvalue estimation
using LossGradFn = std::function<std::pair<double, Vec>(const Vec&)>;

// Central-difference gradient, one coordinate at a time.
Vec finite_difference_gradient(const LossFn& loss, const Vec& params, double step);

// Central-difference Hessian-vector product from exact gradients:
// (grad(x + s v) - grad(x - s v)) / (2 s).
Vec hessian_vector_product(const GradFn& grad, const Vec& params, const Vec& v, double step);

// Dense Hessian by double finite differences of the loss; test oracle for
// tiny parameter counts.
Mat finite_difference_hessian(const LossFn& loss, const Vec& params, double step);

}  // namespace sabnn
