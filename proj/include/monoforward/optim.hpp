#pragma once

#include <cstdint>

#include "monoforward/matrix.hpp"

namespace mono {

enum class OptimizerKind { Sgd, Adam };

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <class T>
struct AdamState {
    DenseMatrix<T> m;
    DenseMatrix<T> v;
    std::uint64_t t = 0;

    bool initialized() const noexcept { return !m.empty() || t > 0; }
    void init_for(const DenseMatrix<T>& param) {
        m = DenseMatrix<T>(param.rows(), param.cols());
        v = DenseMatrix<T>(param.rows(), param.cols());
        t = 0;
    }
    void clear() {
        m.release();
        v.release();
        t = 0;
    }
};

/// param -= lr * grad
template <class T>
void sgd_step(DenseMatrix<T>& param, const DenseMatrix<T>& grad, double lr);

/// Bias-corrected Adam update; allocates the moment buffers on first use.
template <class T>
void adam_step(DenseMatrix<T>& param, const DenseMatrix<T>& grad, AdamState<T>& state, double lr,
               const AdamHyper& hyper = {});

template <class T>
void optimizer_step(OptimizerKind kind, DenseMatrix<T>& param, const DenseMatrix<T>& grad, AdamState<T>& state,
                    double lr) {
    if (kind == OptimizerKind::Adam)
        adam_step(param, grad, state, lr);
    else
        sgd_step(param, grad, lr);
}

}  // namespace mono
