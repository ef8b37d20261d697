#include "monoforward/layers.hpp"

#include <cmath>

#include "monoforward/ops.hpp"
#include "monoforward/rng.hpp"

namespace mono {

template <class T>
void LayerParams<T>::allocate_optimizer_state(OptimizerKind kind) {
    if (kind != OptimizerKind::Adam) return;
    if (!opt_W.m.same_shape(W)) opt_W.init_for(W);
    if (b && !opt_b.m.same_shape(*b)) opt_b.init_for(*b);
    if (has_projection() && !opt_M.m.same_shape(M)) opt_M.init_for(M);
}

template <class T>
LayerParams<T> init_dense_layer(const LayerInit& spec, std::uint64_t seed, std::uint32_t layer_index) {
    if (spec.fan_in == 0 || spec.fan_out == 0) throw ShapeError("init_dense_layer: zero-sized layer");
    LayerParams<T> p;
    p.W = DenseMatrix<T>(spec.fan_in, spec.fan_out);
    auto wgen = make_stream(seed, layer_index, StreamRole::Weights);
    const double wb = std::sqrt(6.0 / static_cast<double>(spec.fan_in));
    for (auto& v : p.W.values()) v = uniform<T>(wgen, T(-wb), T(wb));
    if (spec.bias) p.b = DenseMatrix<T>(1, spec.fan_out);
    if (spec.projection) {
        if (spec.classes == 0) throw ShapeError("init_dense_layer: projection needs at least one class");
        p.M = DenseMatrix<T>(spec.classes, spec.fan_out);
        auto mgen = make_stream(seed, layer_index, StreamRole::Projection);
        const double mb = 1.0 / std::sqrt(static_cast<double>(spec.fan_out));
        for (auto& v : p.M.values()) v = uniform<T>(mgen, T(-mb), T(mb));
    }
    return p;
}

template <class T>
ActivationRecord<T> dense_forward(const DenseMatrix<T>& a_prev, const LayerParams<T>& p) {
    if (a_prev.cols() != p.W.rows())
        throw ShapeError("dense_forward: input " + a_prev.shape_str() + " does not match weights " +
                         p.W.shape_str());
    ActivationRecord<T> rec;
    rec.z = matmul(a_prev, p.W);
    if (p.b) add_row_vector(rec.z, p.b->values());
    rec.a = relu(rec.z);
    return rec;
}

template <class T>
DenseMatrix<T> projection_goodness(const DenseMatrix<T>& a, const DenseMatrix<T>& M) {
    if (a.cols() != M.cols())
        throw ShapeError("projection_goodness: activations " + a.shape_str() + " vs projection " + M.shape_str());
    return matmul_nt(a, M);
}

template <class T>
LocalGrads<T> local_grads(const DenseMatrix<T>& a_prev, const ActivationRecord<T>& rec, const DenseMatrix<T>& dG,
                          const LayerParams<T>& p) {
    if (!rec.z.same_shape(rec.a) || rec.a.cols() != p.fan_out() || a_prev.cols() != p.fan_in() ||
        a_prev.rows() != rec.a.rows() || dG.rows() != rec.a.rows() || dG.cols() != p.M.rows())
        throw ShapeError("local_grads: inconsistent shapes (input " + a_prev.shape_str() + ", activations " +
                         rec.a.shape_str() + ", dG " + dG.shape_str() + ", W " + p.W.shape_str() + ", M " +
                         p.M.shape_str() + ")");
    LocalGrads<T> g;
    g.dM = matmul_tn(dG, rec.a);
    DenseMatrix<T> dz = matmul(dG, p.M);
    apply_relu_mask(dz, rec.z);
    g.dW = matmul_tn(a_prev, dz);
    if (p.b) g.db = column_sum(dz);
    return g;
}

#define MONO_INSTANTIATE(T)                                                                              \
    template struct LayerParams<T>;                                                                      \
    template LayerParams<T> init_dense_layer<T>(const LayerInit&, std::uint64_t, std::uint32_t);         \
    template ActivationRecord<T> dense_forward(const DenseMatrix<T>&, const LayerParams<T>&);            \
    template DenseMatrix<T> projection_goodness(const DenseMatrix<T>&, const DenseMatrix<T>&);           \
    template LocalGrads<T> local_grads(const DenseMatrix<T>&, const ActivationRecord<T>&, const DenseMatrix<T>&, \
                                       const LayerParams<T>&);

MONO_INSTANTIATE(float)
MONO_INSTANTIATE(double)

}  // namespace mono
