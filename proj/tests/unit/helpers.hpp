#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <random>

#include "monoforward/matrix.hpp"
#include "monoforward/ops.hpp"
#include "monoforward/rng.hpp"

namespace testutil {

using mono::DenseMatrix;

template <class T = double>
DenseMatrix<T> random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 gen(seed);
    DenseMatrix<T> m(r, c);
    for (auto& v : m.values()) v = mono::uniform<T>(gen, T(lo), T(hi));
    return m;
}

inline std::vector<mono::Label> random_labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::vector<mono::Label> y(n);
    for (auto& l : y) l = static_cast<mono::Label>(gen() % classes);
    return y;
}

/// ||a - b|| / max(||a||, ||b||, tiny), Frobenius norms.
template <class T>
double relative_error(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
    double diff = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a.data()[i], y = b.data()[i];
        diff += (x - y) * (x - y);
        na += x * x;
        nb += y * y;
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
}

/// Central differences of `loss` with respect to every entry of `param`.
inline DenseMatrix<double> numeric_gradient(DenseMatrix<double>& param, const std::function<double()>& loss,
                                            double h = 1e-5) {
    DenseMatrix<double> g(param.rows(), param.cols());
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double keep = param.data()[i];
        param.data()[i] = keep + h;
        const double up = loss();
        param.data()[i] = keep - h;
        const double down = loss();
        param.data()[i] = keep;
        g.data()[i] = (up - down) / (2 * h);
    }
    return g;
}

template <class T>
bool bit_equal(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
    return a.same_shape(b) && std::equal(a.data(), a.data() + a.size(), b.data(),
                                         [](T x, T y) { return std::memcmp(&x, &y, sizeof(T)) == 0; });
}

}  // namespace testutil
