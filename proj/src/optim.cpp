#include "monoforward/optim.hpp"

#include <cmath>

namespace mono {

template <class T>
void sgd_step(DenseMatrix<T>& param, const DenseMatrix<T>& grad, double lr) {
    if (!param.same_shape(grad))
        throw ShapeError("sgd_step: parameter " + param.shape_str() + " vs gradient " + grad.shape_str());
    const T step = static_cast<T>(lr);
    T* p = param.data();
    const T* g = grad.data();
    for (std::size_t i = 0; i < param.size(); ++i) p[i] -= step * g[i];
}

template <class T>
void adam_step(DenseMatrix<T>& param, const DenseMatrix<T>& grad, AdamState<T>& state, double lr,
               const AdamHyper& hyper) {
    if (!param.same_shape(grad))
        throw ShapeError("adam_step: parameter " + param.shape_str() + " vs gradient " + grad.shape_str());
    if (!state.m.same_shape(param) || !state.v.same_shape(param)) {
        if (state.t != 0) throw ShapeError("adam_step: optimizer state does not match parameter shape");
        state.init_for(param);
    }
    ++state.t;
    const T b1 = static_cast<T>(hyper.beta1);
    const T b2 = static_cast<T>(hyper.beta2);
    const T eps = static_cast<T>(hyper.epsilon);
    const double t = static_cast<double>(state.t);
    const T corr1 = static_cast<T>(1.0 - std::pow(hyper.beta1, t));
    const T corr2 = static_cast<T>(1.0 - std::pow(hyper.beta2, t));
    const T alpha = static_cast<T>(lr);

    T* p = param.data();
    const T* g = grad.data();
    T* m = state.m.data();
    T* v = state.v.data();
    for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = b1 * m[i] + (T{1} - b1) * g[i];
        v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
        const T mhat = m[i] / corr1;
        const T vhat = v[i] / corr2;
        p[i] -= alpha * mhat / (std::sqrt(vhat) + eps);
    }
}

template void sgd_step(DenseMatrix<float>&, const DenseMatrix<float>&, double);
template void sgd_step(DenseMatrix<double>&, const DenseMatrix<double>&, double);
template void adam_step(DenseMatrix<float>&, const DenseMatrix<float>&, AdamState<float>&, double,
                        const AdamHyper&);
template void adam_step(DenseMatrix<double>&, const DenseMatrix<double>&, AdamState<double>&, double,
                        const AdamHyper&);

}  // namespace mono
