#include "monoforward/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mono {
namespace {

// Register-blocked panel kernel. Each C(i,j) is produced by one accumulator
// that walks k = 0..K-1 in order; blocking only changes which elements are
// computed together, never the reduction order of an element.
template <class T, bool TransA, std::size_t MR>
inline void gemm_block(const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc,
                       std::size_t i0, std::size_t j0, std::size_t jw, std::size_t K) {
    constexpr std::size_t JB = 256 / sizeof(T);
    alignas(64) T acc[MR][JB] = {};
    for (std::size_t k = 0; k < K; ++k) {
        const T* brow = b + k * ldb + j0;
        T av[MR];
        for (std::size_t r = 0; r < MR; ++r)
            av[r] = TransA ? a[k * lda + i0 + r] : a[(i0 + r) * lda + k];
        if (jw == JB) {
            for (std::size_t r = 0; r < MR; ++r) {
#pragma GCC unroll 8
                for (std::size_t j = 0; j < JB; ++j) acc[r][j] += av[r] * brow[j];
            }
        } else {
            for (std::size_t r = 0; r < MR; ++r)
                for (std::size_t j = 0; j < jw; ++j) acc[r][j] += av[r] * brow[j];
        }
    }
    for (std::size_t r = 0; r < MR; ++r) std::copy_n(acc[r], jw, c + (i0 + r) * ldc + j0);
}

template <class T, bool TransA>
void gemm(const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t M, std::size_t N,
          std::size_t K) {
    constexpr std::size_t JB = 256 / sizeof(T);
    constexpr std::size_t MR = 4;
    for (std::size_t j0 = 0; j0 < N; j0 += JB) {
        const std::size_t jw = std::min(JB, N - j0);
        std::size_t i0 = 0;
        for (; i0 + MR <= M; i0 += MR) gemm_block<T, TransA, MR>(a, lda, b, ldb, c, N, i0, j0, jw, K);
        for (; i0 < M; ++i0) gemm_block<T, TransA, 1>(a, lda, b, ldb, c, N, i0, j0, jw, K);
    }
}

template <class T>
void transpose_into(const T* src, std::size_t rows, std::size_t cols, T* dst) {
    constexpr std::size_t TB = 32;
    for (std::size_t r0 = 0; r0 < rows; r0 += TB)
        for (std::size_t c0 = 0; c0 < cols; c0 += TB) {
            const std::size_t r1 = std::min(rows, r0 + TB), c1 = std::min(cols, c0 + TB);
            for (std::size_t r = r0; r < r1; ++r)
                for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
        }
}

[[noreturn]] void shape_fail(const char* op, const std::string& sa, const std::string& sb) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + sa + " and " + sb);
}

}  // namespace

template <class T>
DenseMatrix<T> matmul(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
    if (a.cols() != b.rows()) shape_fail("matmul", a.shape_str(), b.shape_str());
    DenseMatrix<T> c(a.rows(), b.cols());
    if (c.empty()) return c;
    gemm<T, false>(a.data(), a.cols(), b.data(), b.cols(), c.data(), a.rows(), b.cols(), a.cols());
    return c;
}

template <class T>
DenseMatrix<T> matmul_tn(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
    if (a.rows() != b.rows()) shape_fail("matmul_tn", a.shape_str() + "^T", b.shape_str());
    DenseMatrix<T> c(a.cols(), b.cols());
    if (c.empty()) return c;
    gemm<T, true>(a.data(), a.cols(), b.data(), b.cols(), c.data(), a.cols(), b.cols(), a.rows());
    return c;
}

template <class T>
DenseMatrix<T> matmul_nt(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
    if (a.cols() != b.cols()) shape_fail("matmul_nt", a.shape_str(), b.shape_str() + "^T");
    DenseMatrix<T> c(a.rows(), b.rows());
    if (c.empty()) return c;
    // pack B^T into untracked scratch
    std::vector<T> bt(b.size());
    transpose_into(b.data(), b.rows(), b.cols(), bt.data());
    gemm<T, false>(a.data(), a.cols(), bt.data(), b.rows(), c.data(), a.rows(), b.rows(), a.cols());
    return c;
}

template <class T>
DenseMatrix<T> transpose(const DenseMatrix<T>& a) {
    DenseMatrix<T> t(a.cols(), a.rows());
    transpose_into(a.data(), a.rows(), a.cols(), t.data());
    return t;
}

template <class T>
DenseMatrix<T> relu(const DenseMatrix<T>& z) {
    DenseMatrix<T> a(z.rows(), z.cols());
    std::transform(z.data(), z.data() + z.size(), a.data(), [](T v) { return v > T{0} ? v : T{0}; });
    return a;
}

template <class T>
DenseMatrix<T> relu_mask(const DenseMatrix<T>& z) {
    DenseMatrix<T> m(z.rows(), z.cols());
    std::transform(z.data(), z.data() + z.size(), m.data(), [](T v) { return v > T{0} ? T{1} : T{0}; });
    return m;
}

template <class T>
void apply_relu_mask(DenseMatrix<T>& x, const DenseMatrix<T>& z) {
    if (!x.same_shape(z)) shape_fail("apply_relu_mask", x.shape_str(), z.shape_str());
    T* px = x.data();
    const T* pz = z.data();
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!(pz[i] > T{0})) px[i] = T{0};
}

template <class T>
DenseMatrix<T> softmax_rows(const DenseMatrix<T>& g) {
    DenseMatrix<T> s(g.rows(), g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r) {
        auto in = g.row(r);
        auto out = s.row(r);
        if (in.empty()) continue;
        const T mx = *std::max_element(in.begin(), in.end());
        T sum{0};
        for (std::size_t c = 0; c < in.size(); ++c) {
            out[c] = std::exp(in[c] - mx);
            sum += out[c];
        }
        for (auto& v : out) v /= sum;
    }
    return s;
}

template <class T>
LossAndGrad<T> cross_entropy_with_grad(const DenseMatrix<T>& g, std::span<const Label> labels) {
    if (labels.size() != g.rows())
        throw ShapeError("cross_entropy_with_grad: " + std::to_string(labels.size()) + " labels for " +
                         g.shape_str() + " scores");
    for (Label y : labels)
        if (y >= g.cols())
            throw LabelError("label " + std::to_string(y) + " out of range for " + std::to_string(g.cols()) +
                             " classes");
    LossAndGrad<T> out{T{0}, DenseMatrix<T>(g.rows(), g.cols())};
    if (g.rows() == 0) return out;
    const T inv_n = T{1} / static_cast<T>(g.rows());
    for (std::size_t r = 0; r < g.rows(); ++r) {
        auto in = g.row(r);
        auto dg = out.grad.row(r);
        const T mx = *std::max_element(in.begin(), in.end());
        T sum{0};
        for (std::size_t c = 0; c < in.size(); ++c) {
            dg[c] = std::exp(in[c] - mx);
            sum += dg[c];
        }
        // -log softmax(y) = log(sum) - (g_y - max)
        out.loss += std::log(sum) - (in[labels[r]] - mx);
        for (auto& v : dg) v = v / sum * inv_n;
        dg[labels[r]] -= inv_n;
    }
    out.loss *= inv_n;
    return out;
}

template <class T>
void add_row_vector(DenseMatrix<T>& z, std::span<const T> bias) {
    if (bias.size() != z.cols())
        shape_fail("add_row_vector", z.shape_str(), "1x" + std::to_string(bias.size()));
    for (std::size_t r = 0; r < z.rows(); ++r) {
        auto row = z.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
    }
}

template <class T>
DenseMatrix<T> column_sum(const DenseMatrix<T>& x) {
    DenseMatrix<T> s(1, x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) s(0, c) += row[c];
    }
    return s;
}

template <class T>
void axpy(T alpha, const DenseMatrix<T>& x, DenseMatrix<T>& y) {
    if (!x.same_shape(y)) shape_fail("axpy", x.shape_str(), y.shape_str());
    const T* px = x.data();
    T* py = y.data();
    for (std::size_t i = 0; i < y.size(); ++i) py[i] += alpha * px[i];
}

template <class T>
std::vector<Label> argmax_rows(const DenseMatrix<T>& g) {
    std::vector<Label> out(g.rows(), 0);
    for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        std::size_t best = 0;
        for (std::size_t c = 1; c < row.size(); ++c)
            if (row[c] > row[best]) best = c;
        out[r] = static_cast<Label>(best);
    }
    return out;
}

template <class T>
DenseMatrix<T> slice_rows(const DenseMatrix<T>& x, std::size_t begin, std::size_t end) {
    if (begin > end || end > x.rows())
        throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                         x.shape_str());
    DenseMatrix<T> out(end - begin, x.cols());
    std::copy(x.data() + begin * x.cols(), x.data() + end * x.cols(), out.data());
    return out;
}

template <class T>
DenseMatrix<T> gather_rows(const DenseMatrix<T>& x, std::span<const std::size_t> index) {
    DenseMatrix<T> out(index.size(), x.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= x.rows()) throw ShapeError("gather_rows: index out of range");
        auto src = x.row(index[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

template <class T>
void check_finite(const DenseMatrix<T>& x, const char* what, int layer) {
    if (!x.all_finite())
        throw NumericError(std::string("non-finite values in ") + what + " of layer " + std::to_string(layer),
                           layer);
}

#define MONO_INSTANTIATE(T)                                                                         \
    template DenseMatrix<T> matmul(const DenseMatrix<T>&, const DenseMatrix<T>&);                   \
    template DenseMatrix<T> matmul_tn(const DenseMatrix<T>&, const DenseMatrix<T>&);                \
    template DenseMatrix<T> matmul_nt(const DenseMatrix<T>&, const DenseMatrix<T>&);                \
    template DenseMatrix<T> transpose(const DenseMatrix<T>&);                                       \
    template DenseMatrix<T> relu(const DenseMatrix<T>&);                                            \
    template DenseMatrix<T> relu_mask(const DenseMatrix<T>&);                                       \
    template void apply_relu_mask(DenseMatrix<T>&, const DenseMatrix<T>&);                          \
    template DenseMatrix<T> softmax_rows(const DenseMatrix<T>&);                                    \
    template LossAndGrad<T> cross_entropy_with_grad(const DenseMatrix<T>&, std::span<const Label>); \
    template void add_row_vector(DenseMatrix<T>&, std::span<const T>);                              \
    template DenseMatrix<T> column_sum(const DenseMatrix<T>&);                                      \
    template void axpy(T, const DenseMatrix<T>&, DenseMatrix<T>&);                                  \
    template std::vector<Label> argmax_rows(const DenseMatrix<T>&);                                 \
    template DenseMatrix<T> slice_rows(const DenseMatrix<T>&, std::size_t, std::size_t);            \
    template DenseMatrix<T> gather_rows(const DenseMatrix<T>&, std::span<const std::size_t>);       \
    template void check_finite(const DenseMatrix<T>&, const char*, int);

MONO_INSTANTIATE(float)
MONO_INSTANTIATE(double)

}  // namespace mono
