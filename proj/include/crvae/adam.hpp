#pragma once

// Adam optimiser state and update, one state per parameter tensor.

#include <cmath>

#include "crvae/tensor.hpp"

namespace crvae {

template <typename T>
struct AdamState {
    Tensor<T> m;  // first-moment estimate, lazily sized to the parameter
    Tensor<T> v;  // second-moment estimate
    std::uint64_t t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// In-place bias-corrected update. A zero gradient with fresh state leaves the
// parameter untouched (but still advances t).
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& st) {
    require_same_shape(param, grad, "adam_step");
    grad.check_finite("adam_step gradient");
    if (st.m.data.empty()) {
        st.m = Tensor<T>::zeros(param.shape);
        st.v = Tensor<T>::zeros(param.shape);
    }
    require_same_shape(param, st.m, "adam_step state");
    st.t += 1;
    const double b1 = st.beta1, b2 = st.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
    for (std::int64_t i = 0; i < param.numel(); ++i) {
        const double g = static_cast<double>(grad[i]);
        const double m = b1 * static_cast<double>(st.m[i]) + (1.0 - b1) * g;
        const double v = b2 * static_cast<double>(st.v[i]) + (1.0 - b2) * g * g;
        st.m[i] = static_cast<T>(m);
        st.v[i] = static_cast<T>(v);
        param[i] -= static_cast<T>(st.lr * (m / c1) / (std::sqrt(v / c2) + st.eps));
    }
}

}  // namespace crvae
