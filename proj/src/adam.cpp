#include "stylealign/adam.hpp"

#include <cmath>

#include "stylealign/errors.hpp"
#include "stylealign/kernels.hpp"

namespace stylealign {

AdamState::AdamState(const AdamConfig& config,
                     std::span<const Tensor* const> params)
    : config_(config) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor* p : params) {
        m_.push_back(Tensor::zeros(p->shape()));
        v_.push_back(Tensor::zeros(p->shape()));
    }
}

void AdamState::step(std::span<Tensor* const> params,
                     std::span<const Tensor> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw ShapeError("adam_step: registry size mismatch");
    }
    ++step_count_;
    kern::AdamUpdateArgs args;
    args.lr = config_.learning_rate;
    args.beta1 = config_.beta1;
    args.beta2 = config_.beta2;
    args.eps = config_.epsilon;
    args.bc1 = 1.0 / (1.0 - std::pow(config_.beta1, step_count_));
    args.bc2 = 1.0 / (1.0 - std::pow(config_.beta2, step_count_));
    const auto& kr = kern::active();
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads[i];
        if (!p.same_shape(g) || !p.same_shape(m_[i])) {
            throw ShapeError("adam_step: parameter/gradient shape mismatch");
        }
        kr.adam_update(p.data(), g.data(), m_[i].data(), v_[i].data(),
                       static_cast<size_t>(p.size()), args);
    }
}

void AdamState::restore(int64_t step_count, std::vector<Tensor> m,
                        std::vector<Tensor> v) {
    if (m.size() != m_.size() || v.size() != v_.size()) {
        throw ShapeError("AdamState::restore: moment count mismatch");
    }
    for (size_t i = 0; i < m.size(); ++i) {
        if (!m[i].same_shape(m_[i]) || !v[i].same_shape(v_[i])) {
            throw ShapeError("AdamState::restore: moment shape mismatch");
        }
    }
    step_count_ = step_count;
    m_ = std::move(m);
    v_ = std::move(v);
}

}  // namespace stylealign
