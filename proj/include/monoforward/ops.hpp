#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "monoforward/matrix.hpp"

namespace mono {

using Label = std::uint32_t;

// Every product below accumulates each output element in a single running
// sum over ascending k, so results are bit-reproducible for a given shape
// and independent of how many rows are in the batch.

/// C = A * B
template <class T>
DenseMatrix<T> matmul(const DenseMatrix<T>& a, const DenseMatrix<T>& b);
/// C = A^T * B, without materializing A^T.
template <class T>
DenseMatrix<T> matmul_tn(const DenseMatrix<T>& a, const DenseMatrix<T>& b);
/// C = A * B^T
template <class T>
DenseMatrix<T> matmul_nt(const DenseMatrix<T>& a, const DenseMatrix<T>& b);

template <class T>
DenseMatrix<T> transpose(const DenseMatrix<T>& a);

template <class T>
DenseMatrix<T> relu(const DenseMatrix<T>& z);
/// 1 where z > 0, else 0 (the derivative at exactly 0 is taken as 0).
template <class T>
DenseMatrix<T> relu_mask(const DenseMatrix<T>& z);
/// In place: x(r,c) = 0 wherever z(r,c) <= 0.
template <class T>
void apply_relu_mask(DenseMatrix<T>& x, const DenseMatrix<T>& z);

/// Row-wise softmax with per-row max subtraction.
template <class T>
DenseMatrix<T> softmax_rows(const DenseMatrix<T>& g);

template <class T>
struct LossAndGrad {
    T loss;
    DenseMatrix<T> grad;
};

/// Mean cross-entropy of softmax(g) against labels and dL/dg = (softmax - onehot) / rows.
template <class T>
LossAndGrad<T> cross_entropy_with_grad(const DenseMatrix<T>& g, std::span<const Label> labels);

/// z(r,:) += bias for every row.
template <class T>
void add_row_vector(DenseMatrix<T>& z, std::span<const T> bias);
/// Column sums as a 1 x cols matrix.
template <class T>
DenseMatrix<T> column_sum(const DenseMatrix<T>& x);

/// y += alpha * x
template <class T>
void axpy(T alpha, const DenseMatrix<T>& x, DenseMatrix<T>& y);

/// Argmax per row; ties resolve to the lowest column index.
template <class T>
std::vector<Label> argmax_rows(const DenseMatrix<T>& g);

/// Rows [begin, end) of x.
template <class T>
DenseMatrix<T> slice_rows(const DenseMatrix<T>& x, std::size_t begin, std::size_t end);
/// Rows of x picked by index.
template <class T>
DenseMatrix<T> gather_rows(const DenseMatrix<T>& x, std::span<const std::size_t> index);

template <class T>
void check_finite(const DenseMatrix<T>& x, const char* what, int layer);

}  // namespace mono
