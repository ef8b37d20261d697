#pragma once

#include <cstdint>

#include "monoforward/matrix.hpp"
#include "monoforward/optim.hpp"

namespace mono {

/// Channel-major image layout; a batch is a DenseMatrix with one flattened
/// (channels, height, width) image per row, the CIFAR-10 byte order.
struct ImageShape {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t size() const noexcept { return channels * height * width; }
    std::size_t plane() const noexcept { return height * width; }
    bool operator==(const ImageShape&) const = default;
};

/// 3x3 same-padding convolution -> ReLU -> 2x2 average pool, with a per-class
/// projection over the flattened pooled output.
template <class T>
struct ConvLayerParams {
    ImageShape input;
    std::size_t out_channels = 0;
    DenseMatrix<T> kernels;  // out_channels x (in_channels * 9)
    DenseMatrix<T> M;        // classes x pooled size
    AdamState<T> opt_K;
    AdamState<T> opt_M;

    ImageShape conv_shape() const noexcept { return {out_channels, input.height, input.width}; }
    ImageShape pooled_shape() const noexcept { return {out_channels, input.height / 2, input.width / 2}; }
    std::size_t parameter_count(bool with_projection) const noexcept {
        return kernels.size() + (with_projection ? M.size() : 0);
    }
};

template <class T>
struct ConvRecord {
    DenseMatrix<T> z;       // batch x conv_shape().size()
    DenseMatrix<T> a;       // relu(z)
    DenseMatrix<T> pooled;  // batch x pooled_shape().size(), the flattened view
};

template <class T>
struct ConvGrads {
    DenseMatrix<T> dkernels;
    DenseMatrix<T> dM;
};

template <class T>
ConvLayerParams<T> init_conv_layer(ImageShape input, std::size_t out_channels, std::size_t classes,
                                   std::uint64_t seed, std::uint32_t layer_index);

template <class T>
ConvRecord<T> conv_block_forward(const DenseMatrix<T>& x, const ConvLayerParams<T>& p);

template <class T>
ConvGrads<T> conv_local_grads(const DenseMatrix<T>& x, const ConvRecord<T>& rec, const DenseMatrix<T>& dG,
                              const ConvLayerParams<T>& p);

/// 2x2 stride-2 mean pooling of each row of x laid out as `shape`.
template <class T>
DenseMatrix<T> avg_pool2x2(const DenseMatrix<T>& x, ImageShape shape);
/// Adjoint of avg_pool2x2: each pooled gradient spreads as g/4 over its window.
template <class T>
DenseMatrix<T> avg_pool2x2_backward(const DenseMatrix<T>& dpooled, ImageShape shape);

}  // namespace mono
