#include "sabnn/fd.hpp"

#include <cmath>
#include <string>

#include "sabnn/error.hpp"

namespace sabnn {

Vec finite_difference_gradient(const LossFn& loss, const Vec& params, double step) {
    check(step > 0.0, "finite_difference_gradient: step must be positive");
    Vec g(params.size());
    Vec x = params;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        const double orig = x(i);
        x(i) = orig + step;
        const double up = loss(x);
        x(i) = orig - step;
        const double down = loss(x);
        x(i) = orig;
        g(i) = (up - down) / (2.0 * step);
    }
    return g;
}

Vec hessian_vector_product(const GradFn& grad, const Vec& params, const Vec& v, double step) {
    check(step > 0.0, "hessian_vector_product: step must be positive");
    check(v.size() == params.size(), "hessian_vector_product: v length mismatch");
    Vec gp = grad(params + step * v);
    Vec gm = grad(params - step * v);
    Vec hv = (gp - gm) / (2.0 * step);
    for (Eigen::Index i = 0; i < hv.size(); ++i) {
        if (!std::isfinite(hv(i))) {
            throw Error("hessian_vector_product: non-finite value at coordinate " +
                        std::to_string(i));
        }
    }
    return hv;
}

Mat finite_difference_hessian(const LossFn& loss, const Vec& params, double step) {
    check(step > 0.0, "finite_difference_hessian: step must be positive");
    const Eigen::Index k = params.size();
    Mat h(k, k);
    for (Eigen::Index j = 0; j < k; ++j) {
        Vec e = Vec::Zero(k);
        e(j) = 1.0;
        auto g = [&](const Vec& x) { return finite_difference_gradient(loss, x, step); };
        h.col(j) = hessian_vector_product(g, params, e, step);
    }
    // symmetrize
    return 0.5 * (h + h.transpose());
}

}  // namespace sabnn
