#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stylealign/tensor.hpp"

namespace stylealign {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    int64_t worst_coordinate = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    int64_t coordinates_checked = 0;
};

// Central-difference check of analytic gradients.
//
// `forward` must re-evaluate the (deterministic) objective at the current
// parameter values; it is called with each coordinate perturbed by +/- h.
// Relative error uses max(|analytic|, |numeric|, 1e-12) as denominator.
GradCheckResult finite_difference_check(
    std::span<Tensor* const> params, std::span<const std::string> param_names,
    std::span<const Tensor> analytic_grads,
    const std::function<double()>& forward, double h);

}  // namespace stylealign
