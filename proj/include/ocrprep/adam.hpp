#pragma once

// Adam with bias correction, one state per parameter tensor.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ocrprep/autodiff.hpp"

namespace ocrprep::diffkernel {

template <class S>
struct AdamState {
    std::vector<S> m, v;
    long t = 0;
    S lr;
    S beta1 = S(0.9);
    S beta2 = S(0.999);
    S eps = S(1e-8);

    explicit AdamState(std::size_t n = 0, S lr_ = S(1e-3)) : m(n, S(0)), v(n, S(0)), lr(lr_) {}
};

template <class S>
void adam_step(Var<S>& param, AdamState<S>& st) {
    if (param->grad.size() != param->value.size())
        throw std::invalid_argument("adam_step: parameter '" + param->name + "' has no gradient");
    if (st.m.size() != param->value.size())
        throw std::invalid_argument("adam_step: state size mismatch for '" + param->name + "'");
    st.t += 1;
    const S bc1 = S(1) - std::pow(st.beta1, S(st.t));
    const S bc2 = S(1) - std::pow(st.beta2, S(st.t));
    for (std::size_t i = 0; i < param->value.size(); ++i) {
        const S g = param->grad[i];
        st.m[i] = st.beta1 * st.m[i] + (S(1) - st.beta1) * g;
        st.v[i] = st.beta2 * st.v[i] + (S(1) - st.beta2) * g * g;
        const S mhat = st.m[i] / bc1;
        const S vhat = st.v[i] / bc2;
        param->value[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
}

// Optimizer over a fixed parameter set. Freezing a subset is done by simply
// not stepping its optimizer.
template <class S>
class Adam {
public:
    Adam(std::vector<Var<S>> params, S lr) : params_(std::move(params)) {
        states_.reserve(params_.size());
        for (const auto& p : params_) states_.emplace_back(p->numel(), lr);
    }

    void zero_grad() {
        for (auto& p : params_) p->zero_grad();
    }

    void step() {
        for (std::size_t i = 0; i < params_.size(); ++i) adam_step(params_[i], states_[i]);
    }

    const std::vector<Var<S>>& params() const { return params_; }

private:
    std::vector<Var<S>> params_;
    std::vector<AdamState<S>> states_;
};

}  // namespace ocrprep::diffkernel
