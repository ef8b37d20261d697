#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "monoforward/errors.hpp"
#include "monoforward/tracker.hpp"

namespace mono {

enum class Precision { Single, Double };

template <class T>
constexpr Precision precision_of();
template <>
constexpr Precision precision_of<float>() { return Precision::Single; }
template <>
constexpr Precision precision_of<double>() { return Precision::Double; }

/// Row-major 2-D array. Payload storage is reported to the AllocationTracker.
template <class T>
class DenseMatrix {
public:
    using value_type = T;
    using Storage = std::vector<T, TrackedAllocator<T>>;

    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, T fill = T{0})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    DenseMatrix(std::initializer_list<std::initializer_list<T>> init);

    static DenseMatrix from_rows(std::size_t rows, std::size_t cols, std::span<const T> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t payload_bytes() const noexcept { return data_.size() * sizeof(T); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return {data_.data(), data_.size()}; }
    std::span<const T> values() const noexcept { return {data_.data(), data_.size()}; }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    // Drops the payload so the tracker sees it released.
    void release() {
        Storage().swap(data_);
        rows_ = cols_ = 0;
    }

    std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }
    bool same_shape(const DenseMatrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool operator==(const DenseMatrix& o) const { return same_shape(o) && data_ == o.data_; }

    template <class U>
    DenseMatrix<U> cast() const {
        DenseMatrix<U> out(rows_, cols_);
        std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
        return out;
    }

    bool all_finite() const noexcept;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Storage data_;
};

template <class T>
DenseMatrix<T>::DenseMatrix(std::initializer_list<std::initializer_list<T>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : init) {
        if (r.size() != cols_) throw ShapeError("ragged initializer list for DenseMatrix");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

template <class T>
DenseMatrix<T> DenseMatrix<T>::from_rows(std::size_t rows, std::size_t cols, std::span<const T> values) {
    if (values.size() != rows * cols)
        throw ShapeError("from_rows: " + std::to_string(values.size()) + " values for shape " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    DenseMatrix m(rows, cols);
    std::copy(values.begin(), values.end(), m.data());
    return m;
}

template <class T>
bool DenseMatrix<T>::all_finite() const noexcept {
    for (T v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

using MatrixF = DenseMatrix<float>;
using MatrixD = DenseMatrix<double>;

}  // namespace mono
