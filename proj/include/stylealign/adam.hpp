#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stylealign/tensor.hpp"

namespace stylealign {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam with bias correction over an ordered parameter registry. Moment
// tensors mirror parameter shapes; step_count advances by one per update.
class AdamState {
public:
    AdamState() = default;
    AdamState(const AdamConfig& config, std::span<const Tensor* const> params);

    // Applies one update in place. params/grads must match the registry
    // order and shapes this state was built with.
    void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

    int64_t step_count() const { return step_count_; }
    const AdamConfig& config() const { return config_; }

    std::vector<Tensor>& first_moments() { return m_; }
    std::vector<Tensor>& second_moments() { return v_; }
    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }
    void restore(int64_t step_count, std::vector<Tensor> m, std::vector<Tensor> v);

private:
    AdamConfig config_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    int64_t step_count_ = 0;
};

}  // namespace stylealign
