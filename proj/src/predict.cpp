#include "monoforward/predict.hpp"

#include <atomic>
#include <fstream>

#include "monoforward/ops.hpp"
#include "monoforward/trainers.hpp"

namespace mono {
namespace {

std::atomic<std::uint64_t> g_passes{0};

template <class T>
DenseMatrix<T> sum_goodness(const GoodnessStack<T>& s, std::size_t rows, std::size_t classes) {
    DenseMatrix<T> total(rows, classes);
    for (const auto& g : s.layers)
        if (!g.empty()) axpy(T{1}, g, total);
    return total;
}

template <class T>
DenseMatrix<T> to_precision(const MatrixF& x) {
    if constexpr (std::is_same_v<T, float>)
        return x;
    else
        return x.template cast<T>();
}

}  // namespace

std::uint64_t forward_pass_count() { return g_passes.load(); }
void reset_forward_pass_count() { g_passes.store(0); }

template <class T>
GoodnessStack<T> mf_forward_goodness(const Model<T>& model, const DenseMatrix<T>& X) {
    g_passes.fetch_add(1);
    GoodnessStack<T> s;
    DenseMatrix<T> h = X;
    for (const auto& layer : model.layers) {
        auto rec = dense_forward(h, layer);
        s.layers.push_back(layer.has_projection() ? projection_goodness(rec.a, layer.M) : DenseMatrix<T>{});
        h = std::move(rec.a);
    }
    return s;
}

template <class T>
MfPredictions mf_predict_all(const Model<T>& model, const DenseMatrix<T>& X) {
    const auto s = mf_forward_goodness(model, X);
    MfPredictions p;
    p.ff = argmax_rows(sum_goodness(s, X.rows(), model.classes));
    for (const auto& g : s.layers) p.per_layer.push_back(g.empty() ? std::vector<Label>{} : argmax_rows(g));
    p.bp = p.per_layer.empty() ? std::vector<Label>{} : p.per_layer.back();
    return p;
}

template <class T>
std::vector<Label> mf_predict_ff(const Model<T>& model, const DenseMatrix<T>& X) {
    const auto s = mf_forward_goodness(model, X);
    return argmax_rows(sum_goodness(s, X.rows(), model.classes));
}

template <class T>
std::vector<Label> mf_predict_bp(const Model<T>& model, const DenseMatrix<T>& X) {
    g_passes.fetch_add(1);
    DenseMatrix<T> h = X;
    for (const auto& layer : model.layers) h = dense_forward(h, layer).a;
    return argmax_rows(projection_goodness(h, model.layers.back().M));
}

template <class T>
std::vector<std::vector<Label>> per_layer_predict(const Model<T>& model, const DenseMatrix<T>& X) {
    return mf_predict_all(model, X).per_layer;
}

template <class T>
std::vector<Label> ff_predict_multipass(const Model<T>& model, const DenseMatrix<T>& X, bool include_first_layer) {
    const std::size_t m = model.classes;
    const T intensity = embedding_intensity(X);
    DenseMatrix<T> total(X.rows(), m);
    std::vector<Label> candidate(X.rows());
    for (std::size_t c = 0; c < m; ++c) {
        g_passes.fetch_add(1);
        std::fill(candidate.begin(), candidate.end(), static_cast<Label>(c));
        DenseMatrix<T> h = embed_labels(X, candidate, m, intensity);
        for (std::size_t i = 0; i < model.depth(); ++i) {
            auto rec = dense_forward(h, model.layers[i]);
            if (i > 0 || include_first_layer) {
                const auto g = ff_goodness(rec.a);
                for (std::size_t r = 0; r < X.rows(); ++r) total(r, c) += g[r];
            }
            h = l2_normalize_rows(rec.a);
        }
    }
    return argmax_rows(total);
}

template <class T>
std::vector<Label> predict(const Model<T>& model, const DenseMatrix<T>& X, PredictionMode mode,
                           bool ff_include_first_layer) {
    switch (model.algorithm) {
        case Algorithm::FF: return ff_predict_multipass(model, X, ff_include_first_layer);
        case Algorithm::MF: return mode == PredictionMode::FF ? mf_predict_ff(model, X) : mf_predict_bp(model, X);
        default: return mf_predict_bp(model, X);
    }
}

double accuracy(std::span<const Label> predicted, std::span<const Label> truth) {
    if (predicted.size() != truth.size()) throw ShapeError("accuracy: prediction and label counts differ");
    if (truth.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

template <class T>
void write_evaluation_csv(const std::filesystem::path& path, const Model<T>& model, const Dataset& ds) {
    const auto X = to_precision<T>(ds.X);
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "sample_index,true_label,pred_ffmode,pred_bpmode";
    if (model.algorithm == Algorithm::MF) {
        for (std::size_t i = 0; i < model.depth(); ++i) os << ",layer_" << i + 1;
        os << "\n";
        const auto p = mf_predict_all(model, X);
        for (std::size_t r = 0; r < ds.size(); ++r) {
            os << r << "," << ds.y[r] << "," << p.ff[r] << "," << p.bp[r];
            for (const auto& l : p.per_layer) os << "," << l[r];
            os << "\n";
        }
        return;
    }
    os << "\n";
    // single-mode algorithms report the same prediction in both columns
    const auto p = predict(model, X);
    for (std::size_t r = 0; r < ds.size(); ++r) os << r << "," << ds.y[r] << "," << p[r] << "," << p[r] << "\n";
}

template <class T>
GoodnessStack<T> conv_forward_goodness(const ConvModel<T>& model, const DenseMatrix<T>& X) {
    g_passes.fetch_add(1);
    GoodnessStack<T> s;
    s.layers.resize(model.depth());
    constexpr std::size_t kChunk = 256;
    for (auto& g : s.layers) g = DenseMatrix<T>(X.rows(), model.classes);
    for (std::size_t r0 = 0; r0 < X.rows(); r0 += kChunk) {
        const std::size_t r1 = std::min(X.rows(), r0 + kChunk);
        DenseMatrix<T> h = slice_rows(X, r0, r1);
        for (std::size_t i = 0; i < model.depth(); ++i) {
            auto rec = conv_block_forward(h, model.blocks[i]);
            const auto g = projection_goodness(rec.pooled, model.blocks[i].M);
            std::copy(g.data(), g.data() + g.size(), s.layers[i].row(r0).data());
            h = std::move(rec.pooled);
        }
    }
    return s;
}

template <class T>
std::vector<Label> conv_predict(const ConvModel<T>& model, const DenseMatrix<T>& X, PredictionMode mode) {
    const auto s = conv_forward_goodness(model, X);
    if (mode == PredictionMode::BP) return argmax_rows(s.layers.back());
    return argmax_rows(sum_goodness(s, X.rows(), model.classes));
}

#define MONO_INSTANTIATE(T)                                                                                  \
    template GoodnessStack<T> mf_forward_goodness(const Model<T>&, const DenseMatrix<T>&);                   \
    template MfPredictions mf_predict_all(const Model<T>&, const DenseMatrix<T>&);                           \
    template std::vector<Label> mf_predict_ff(const Model<T>&, const DenseMatrix<T>&);                       \
    template std::vector<Label> mf_predict_bp(const Model<T>&, const DenseMatrix<T>&);                       \
    template std::vector<std::vector<Label>> per_layer_predict(const Model<T>&, const DenseMatrix<T>&);      \
    template std::vector<Label> ff_predict_multipass(const Model<T>&, const DenseMatrix<T>&, bool);          \
    template std::vector<Label> predict(const Model<T>&, const DenseMatrix<T>&, PredictionMode, bool);       \
    template void write_evaluation_csv(const std::filesystem::path&, const Model<T>&, const Dataset&);       \
    template GoodnessStack<T> conv_forward_goodness(const ConvModel<T>&, const DenseMatrix<T>&);             \
    template std::vector<Label> conv_predict(const ConvModel<T>&, const DenseMatrix<T>&, PredictionMode);

MONO_INSTANTIATE(float)
MONO_INSTANTIATE(double)

}  // namespace mono
