#pragma once

#include <cstdint>
#include <optional>

#include "monoforward/matrix.hpp"
#include "monoforward/optim.hpp"

namespace mono {

/// One dense layer: weights W (fan_in x fan_out), optional bias (1 x fan_out)
/// and the per-class projection M (classes x fan_out). M is empty for layers
/// that carry no projection (FF layers, hidden layers of BP/FA/DFA nets).
template <class T>
struct LayerParams {
    DenseMatrix<T> W;
    std::optional<DenseMatrix<T>> b;
    DenseMatrix<T> M;
    AdamState<T> opt_W;
    AdamState<T> opt_b;
    AdamState<T> opt_M;

    std::size_t fan_in() const noexcept { return W.rows(); }
    std::size_t fan_out() const noexcept { return W.cols(); }
    bool has_bias() const noexcept { return b.has_value(); }
    bool has_projection() const noexcept { return !M.empty(); }

    /// Trainable scalars, optionally including the projection.
    std::size_t parameter_count(bool with_projection) const noexcept {
        return W.size() + (b ? b->size() : 0) + (with_projection ? M.size() : 0);
    }

    void allocate_optimizer_state(OptimizerKind kind);
};

template <class T>
struct ActivationRecord {
    DenseMatrix<T> z;  // pre-activation
    DenseMatrix<T> a;  // relu(z)
};

/// Closed-form gradients of one layer's local loss. There is deliberately no
/// member for the gradient with respect to the layer input.
template <class T>
struct LocalGrads {
    DenseMatrix<T> dW;
    std::optional<DenseMatrix<T>> db;
    DenseMatrix<T> dM;
};

struct LayerInit {
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    std::size_t classes = 0;
    bool bias = false;
    bool projection = true;
};

/// W ~ U(+-sqrt(6 / fan_in)), M ~ U(+-1 / sqrt(fan_out)), bias zero; drawn from
/// the (seed, layer_index) streams so a layer's init ignores the rest of the net.
template <class T>
LayerParams<T> init_dense_layer(const LayerInit& spec, std::uint64_t seed, std::uint32_t layer_index);

template <class T>
ActivationRecord<T> dense_forward(const DenseMatrix<T>& a_prev, const LayerParams<T>& p);

/// G = a * M^T, one row of class scores per sample.
template <class T>
DenseMatrix<T> projection_goodness(const DenseMatrix<T>& a, const DenseMatrix<T>& M);

template <class T>
LocalGrads<T> local_grads(const DenseMatrix<T>& a_prev, const ActivationRecord<T>& rec, const DenseMatrix<T>& dG,
                          const LayerParams<T>& p);

}  // namespace mono
