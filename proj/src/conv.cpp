#include "monoforward/conv.hpp"

#include <cmath>

#include "monoforward/ops.hpp"
#include "monoforward/rng.hpp"

namespace mono {
namespace {

void check_even(ImageShape s) {
    if (s.height % 2 != 0 || s.width % 2 != 0 || s.height == 0 || s.width == 0)
        throw ShapeError("conv block needs even, non-zero spatial dims; got " + std::to_string(s.height) + "x" +
                         std::to_string(s.width));
}

// cols(c*9 + ky*3 + kx, y*W + x) = img(c, y+ky-1, x+kx-1), zero outside.
template <class T>
void im2col(std::span<const T> img, ImageShape s, DenseMatrix<T>& cols) {
    const auto H = static_cast<std::ptrdiff_t>(s.height), W = static_cast<std::ptrdiff_t>(s.width);
    for (std::size_t c = 0; c < s.channels; ++c)
        for (std::ptrdiff_t ky = 0; ky < 3; ++ky)
            for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
                auto row = cols.row(c * 9 + static_cast<std::size_t>(ky * 3 + kx));
                for (std::ptrdiff_t y = 0; y < H; ++y) {
                    const std::ptrdiff_t sy = y + ky - 1;
                    for (std::ptrdiff_t x = 0; x < W; ++x) {
                        const std::ptrdiff_t sx = x + kx - 1;
                        row[static_cast<std::size_t>(y * W + x)] =
                            (sy < 0 || sy >= H || sx < 0 || sx >= W)
                                ? T{0}
                                : img[c * s.plane() + static_cast<std::size_t>(sy * W + sx)];
                    }
                }
            }
}

}  // namespace

template <class T>
ConvLayerParams<T> init_conv_layer(ImageShape input, std::size_t out_channels, std::size_t classes,
                                   std::uint64_t seed, std::uint32_t layer_index) {
    check_even(input);
    if (input.channels == 0 || out_channels == 0 || classes == 0)
        throw ShapeError("init_conv_layer: zero channels or classes");
    ConvLayerParams<T> p;
    p.input = input;
    p.out_channels = out_channels;
    p.kernels = DenseMatrix<T>(out_channels, input.channels * 9);
    auto kgen = make_stream(seed, layer_index, StreamRole::Weights);
    const double kb = std::sqrt(6.0 / static_cast<double>(input.channels * 9));
    for (auto& v : p.kernels.values()) v = uniform<T>(kgen, T(-kb), T(kb));
    const std::size_t flat = p.pooled_shape().size();
    p.M = DenseMatrix<T>(classes, flat);
    auto mgen = make_stream(seed, layer_index, StreamRole::Projection);
    const double mb = 1.0 / std::sqrt(static_cast<double>(flat));
    for (auto& v : p.M.values()) v = uniform<T>(mgen, T(-mb), T(mb));
    return p;
}

template <class T>
DenseMatrix<T> avg_pool2x2(const DenseMatrix<T>& x, ImageShape s) {
    check_even(s);
    if (x.cols() != s.size()) throw ShapeError("avg_pool2x2: row length does not match image shape");
    const std::size_t oh = s.height / 2, ow = s.width / 2;
    DenseMatrix<T> out(x.rows(), s.channels * oh * ow);
    for (std::size_t n = 0; n < x.rows(); ++n) {
        auto in = x.row(n);
        auto o = out.row(n);
        for (std::size_t c = 0; c < s.channels; ++c)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    const std::size_t base = c * s.plane() + 2 * y * s.width + 2 * xx;
                    o[c * oh * ow + y * ow + xx] =
                        (in[base] + in[base + 1] + in[base + s.width] + in[base + s.width + 1]) * T(0.25);
                }
    }
    return out;
}

template <class T>
DenseMatrix<T> avg_pool2x2_backward(const DenseMatrix<T>& dpooled, ImageShape s) {
    check_even(s);
    const std::size_t oh = s.height / 2, ow = s.width / 2;
    if (dpooled.cols() != s.channels * oh * ow)
        throw ShapeError("avg_pool2x2_backward: gradient length does not match image shape");
    DenseMatrix<T> dx(dpooled.rows(), s.size());
    for (std::size_t n = 0; n < dpooled.rows(); ++n) {
        auto g = dpooled.row(n);
        auto d = dx.row(n);
        for (std::size_t c = 0; c < s.channels; ++c)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    const T q = g[c * oh * ow + y * ow + xx] * T(0.25);
                    const std::size_t base = c * s.plane() + 2 * y * s.width + 2 * xx;
                    d[base] = q;
                    d[base + 1] = q;
                    d[base + s.width] = q;
                    d[base + s.width + 1] = q;
                }
    }
    return dx;
}

template <class T>
ConvRecord<T> conv_block_forward(const DenseMatrix<T>& x, const ConvLayerParams<T>& p) {
    if (x.cols() != p.input.size())
        throw ShapeError("conv_block_forward: input rows of length " + std::to_string(x.cols()) +
                         " do not match " + std::to_string(p.input.channels) + " channels of " +
                         std::to_string(p.input.height) + "x" + std::to_string(p.input.width));
    check_even(p.input);
    const ImageShape cs = p.conv_shape();
    ConvRecord<T> rec;
    rec.z = DenseMatrix<T>(x.rows(), cs.size());
    DenseMatrix<T> cols(p.input.channels * 9, p.input.plane());
    for (std::size_t n = 0; n < x.rows(); ++n) {
        im2col(x.row(n), p.input, cols);
        const DenseMatrix<T> zn = matmul(p.kernels, cols);
        std::copy(zn.data(), zn.data() + zn.size(), rec.z.row(n).begin());
    }
    rec.a = relu(rec.z);
    rec.pooled = avg_pool2x2(rec.a, cs);
    return rec;
}

template <class T>
ConvGrads<T> conv_local_grads(const DenseMatrix<T>& x, const ConvRecord<T>& rec, const DenseMatrix<T>& dG,
                              const ConvLayerParams<T>& p) {
    const ImageShape cs = p.conv_shape();
    if (x.cols() != p.input.size() || rec.z.cols() != cs.size() || !rec.z.same_shape(rec.a) ||
        rec.pooled.cols() != p.M.cols() || dG.cols() != p.M.rows() || dG.rows() != x.rows() ||
        rec.z.rows() != x.rows())
        throw ShapeError("conv_local_grads: inconsistent shapes");
    ConvGrads<T> g;
    g.dM = matmul_tn(dG, rec.pooled);
    DenseMatrix<T> dz = avg_pool2x2_backward(matmul(dG, p.M), cs);
    apply_relu_mask(dz, rec.z);
    g.dkernels = DenseMatrix<T>(p.kernels.rows(), p.kernels.cols());
    DenseMatrix<T> cols(p.input.channels * 9, p.input.plane());
    for (std::size_t n = 0; n < x.rows(); ++n) {
        im2col(x.row(n), p.input, cols);
        const auto dzn = DenseMatrix<T>::from_rows(p.out_channels, cs.plane(), dz.row(n));
        axpy(T{1}, matmul_nt(dzn, cols), g.dkernels);
    }
    return g;
}

#define MONO_INSTANTIATE(T)                                                                                  \
    template ConvLayerParams<T> init_conv_layer<T>(ImageShape, std::size_t, std::size_t, std::uint64_t,      \
                                                   std::uint32_t);                                           \
    template ConvRecord<T> conv_block_forward(const DenseMatrix<T>&, const ConvLayerParams<T>&);             \
    template ConvGrads<T> conv_local_grads(const DenseMatrix<T>&, const ConvRecord<T>&, const DenseMatrix<T>&, \
                                           const ConvLayerParams<T>&);                                       \
    template DenseMatrix<T> avg_pool2x2(const DenseMatrix<T>&, ImageShape);                                  \
    template DenseMatrix<T> avg_pool2x2_backward(const DenseMatrix<T>&, ImageShape);

MONO_INSTANTIATE(float)
MONO_INSTANTIATE(double)

}  // namespace mono
