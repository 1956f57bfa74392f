#include "stylealign/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "stylealign/errors.hpp"

namespace stylealign {

GradCheckResult finite_difference_check(
    std::span<Tensor* const> params, std::span<const std::string> param_names,
    std::span<const Tensor> analytic_grads,
    const std::function<double()>& forward, double h) {
    if (!(h > 0.0)) {
        throw ContractError("finite_difference_check: h must be positive");
    }
    if (params.size() != analytic_grads.size() ||
        params.size() != param_names.size()) {
        throw ShapeError("finite_difference_check: registry size mismatch");
    }
    GradCheckResult result;
    for (size_t p = 0; p < params.size(); ++p) {
        Tensor& param = *params[p];
        const Tensor& analytic = analytic_grads[p];
        if (!param.same_shape(analytic)) {
            throw ShapeError("finite_difference_check: gradient shape mismatch for " +
                             param_names[p]);
        }
        for (int64_t i = 0; i < param.size(); ++i) {
            const double saved = param.at(i);
            param.at(i) = saved + h;
            const double up = forward();
            param.at(i) = saved - h;
            const double down = forward();
            param.at(i) = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic.at(i);
            const double denom =
                std::max({std::abs(a), std::abs(numeric), 1e-12});
            const double rel = std::abs(a - numeric) / denom;
            ++result.coordinates_checked;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_param = param_names[p];
                result.worst_coordinate = i;
                result.worst_analytic = a;
                result.worst_numeric = numeric;
            }
        }
    }
    return result;
}

}  // namespace stylealign
