#include "monoforward/trainers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "monoforward/checkpoint.hpp"
#include "monoforward/ops.hpp"
#include "monoforward/pipeline.hpp"
#include "monoforward/predict.hpp"
#include "monoforward/rng.hpp"
#include "monoforward/tracker.hpp"

namespace mono {
namespace {

std::size_t count_hits(const std::vector<Label>& pred, std::span<const Label> y) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < y.size(); ++i) hits += pred[i] == y[i];
    return hits;
}

void check_loss(double loss, int layer) {
    if (!std::isfinite(loss)) throw NumericError("non-finite loss at layer " + std::to_string(layer), layer);
}

void check_rows(std::size_t rows, std::size_t labels) {
    if (rows != labels)
        throw ShapeError("batch has " + std::to_string(rows) + " rows but " + std::to_string(labels) + " labels");
}

template <class T>
DenseMatrix<T> to_precision(const MatrixF& x) {
    if constexpr (std::is_same_v<T, float>)
        return x;
    else
        return x.template cast<T>();
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::filesystem::path layer_file(const std::filesystem::path& dir, std::size_t i) {
    return dir / ("layer" + std::to_string(i + 1) + ".mfck");
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (!std::isfinite(theta)) throw ConfigError("theta must be finite");
    if (stage_capacity == 0) throw ConfigError("stage_capacity must be at least 1");
    if (pipeline && algorithm != Algorithm::MF) throw ConfigError("pipelined training is only available for mf");
    if (!persist_dir.empty() && algorithm != Algorithm::MF)
        throw ConfigError("weight persistence is only available for mf");
    if (pipeline && !persist_dir.empty()) throw ConfigError("weight persistence cannot be combined with the pipeline");
}

void EpochTotals::add(const BatchStats& s) {
    if (loss_sum.empty()) {
        loss_sum.assign(s.layer_loss.size(), 0.0);
        correct.assign(s.layer_correct.size(), 0);
    }
    const double n = static_cast<double>(s.samples);
    for (std::size_t i = 0; i < s.layer_loss.size(); ++i) loss_sum[i] += s.layer_loss[i] * n;
    for (std::size_t i = 0; i < s.layer_correct.size(); ++i) correct[i] += s.layer_correct[i];
    aggregate_correct += s.aggregate_correct;
    samples += s.samples;
    has_accuracy = has_accuracy && s.has_accuracy;
}

// ---- Mono-Forward --------------------------------------------------------

template <class T>
LayerStepResult<T> mf_layer_step(LayerParams<T>& layer, const DenseMatrix<T>& a_prev, std::span<const Label> labels,
                                 const TrainConfig& cfg, int layer_index) {
    check_rows(a_prev.rows(), labels.size());
    auto rec = dense_forward(a_prev, layer);
    auto G = projection_goodness(rec.a, layer.M);
    auto ce = cross_entropy_with_grad(G, labels);
    check_loss(ce.loss, layer_index);
    auto g = local_grads(a_prev, rec, ce.grad, layer);
    rec.z.release();
    ce.grad.release();
    optimizer_step(cfg.optimizer, layer.W, g.dW, layer.opt_W, cfg.lr);
    if (layer.b) optimizer_step(cfg.optimizer, *layer.b, *g.db, layer.opt_b, cfg.lr);
    optimizer_step(cfg.optimizer, layer.M, g.dM, layer.opt_M, cfg.lr);
    return {std::move(rec.a), std::move(G), static_cast<double>(ce.loss)};
}

template <class T>
BatchStats mf_train_batch(Model<T>& model, const DenseMatrix<T>& X, std::span<const Label> y, const TrainConfig& cfg) {
    check_rows(X.rows(), y.size());
    BatchStats st;
    st.samples = y.size();
    DenseMatrix<T> total(X.rows(), model.classes);
    DenseMatrix<T> h;
    const bool persist = !cfg.persist_dir.empty();
    for (std::size_t i = 0; i < model.depth(); ++i) {
        auto& layer = model.layers[i];
        if (persist) restore_layer(layer, layer_file(cfg.persist_dir, i));
        auto r = mf_layer_step(layer, i == 0 ? X : h, y, cfg, static_cast<int>(i + 1));
        if (persist) offload_layer(layer, layer_file(cfg.persist_dir, i));
        st.layer_loss.push_back(r.loss);
        st.layer_correct.push_back(count_hits(argmax_rows(r.goodness), y));
        axpy(T{1}, r.goodness, total);
        r.goodness.release();
        h = std::move(r.a);
    }
    st.aggregate_correct = count_hits(argmax_rows(total), y);
    return st;
}

// ---- BP / FA / DFA -------------------------------------------------------

namespace {

struct PassResult {
    double loss = 0.0;
    std::size_t correct = 0;
};

// Forward through every layer keeping (z, a), then walk back one layer at a
// time. Each layer's gradients are handed to `sink` as soon as the transport
// to the layer below has been computed from the pre-update weights, so the
// sink may update the layer in place.
template <class T, class Sink>
PassResult backprop_pass(const Model<T>& model, const DenseMatrix<T>& X, std::span<const Label> y, Transport transport,
                         Sink&& sink) {
    check_rows(X.rows(), y.size());
    const std::size_t L = model.depth();
    if (L == 0) throw ShapeError("model has no layers");
    if (!model.layers.back().has_projection()) throw ShapeError("model has no output head");
    if (transport != Transport::Exact && model.feedback.size() != L)
        throw ShapeError("feedback matrices do not match the model depth");

    std::vector<ActivationRecord<T>> recs(L);
    for (std::size_t i = 0; i < L; ++i) recs[i] = dense_forward(i == 0 ? X : recs[i - 1].a, model.layers[i]);

    const auto& head = model.layers.back();
    auto G = projection_goodness(recs[L - 1].a, head.M);
    auto ce = cross_entropy_with_grad(G, y);
    check_loss(ce.loss, static_cast<int>(L));
    PassResult out{static_cast<double>(ce.loss), count_hits(argmax_rows(G), y)};
    G.release();
    const DenseMatrix<T>& err = ce.grad;

    DenseMatrix<T> dM = matmul_tn(err, recs[L - 1].a);
    DenseMatrix<T> da = transport == Transport::Exact ? matmul(err, head.M) : matmul(err, model.feedback[L - 1]);

    for (std::size_t i = L; i-- > 0;) {
        const auto& layer = model.layers[i];
        DenseMatrix<T> dz = std::move(da);
        apply_relu_mask(dz, recs[i].z);
        recs[i].z.release();
        LocalGrads<T> g;
        g.dW = matmul_tn(i == 0 ? X : recs[i - 1].a, dz);
        if (layer.has_bias()) g.db = column_sum(dz);
        if (i + 1 == L) g.dM = std::move(dM);
        if (i > 0) {
            switch (transport) {
                case Transport::Exact: da = matmul_nt(dz, layer.W); break;
                case Transport::Feedback: da = matmul(dz, model.feedback[i - 1]); break;
                case Transport::Direct: da = matmul(err, model.feedback[i - 1]); break;
            }
        }
        dz.release();
        recs[i].a.release();
        sink(i, std::move(g));
    }
    return out;
}

template <class T>
BatchStats backprop_train(Model<T>& model, const DenseMatrix<T>& X, std::span<const Label> y, const TrainConfig& cfg,
                          Transport transport) {
    auto step = [&](std::size_t i, LocalGrads<T>&& g) {
        auto& layer = model.layers[i];
        optimizer_step(cfg.optimizer, layer.W, g.dW, layer.opt_W, cfg.lr);
        if (layer.b) optimizer_step(cfg.optimizer, *layer.b, *g.db, layer.opt_b, cfg.lr);
        if (!g.dM.empty()) optimizer_step(cfg.optimizer, layer.M, g.dM, layer.opt_M, cfg.lr);
    };
    const auto r = backprop_pass(model, X, y, transport, step);
    BatchStats st;
    st.samples = y.size();
    st.layer_loss = {r.loss};
    st.layer_correct = {r.correct};
    st.aggregate_correct = r.correct;
    return st;
}

}  // namespace

template <class T>
BackpropGrads<T> backprop_gradients(const Model<T>& model, const DenseMatrix<T>& X, std::span<const Label> y,
                                    Transport transport) {
    BackpropGrads<T> out;
    out.layers.resize(model.depth());
    out.loss = backprop_pass(model, X, y, transport, [&](std::size_t i, LocalGrads<T>&& g) {
                   out.layers[i] = std::move(g);
               }).loss;
    return out;
}

template <class T>
BatchStats bp_train_batch(Model<T>& model, const DenseMatrix<T>& X, std::span<const Label> y, const TrainConfig& cfg) {
    return backprop_train(model, X, y, cfg, Transport::Exact);
}

template <class T>
BatchStats fa_train_batch(Model<T>& model, const DenseMatrix<T>& X, std::span<const Label> y, const TrainConfig& cfg) {
    return backprop_train(model, X, y, cfg, Transport::Feedback);
}

template <class T>
BatchStats dfa_train_batch(Model<T>& model, const DenseMatrix<T>& X, std::span<const Label> y,
                           const TrainConfig& cfg) {
    return backprop_train(model, X, y, cfg, Transport::Direct);
}

// ---- Forward-Forward -----------------------------------------------------

template <class T>
DenseMatrix<T> embed_labels(const DenseMatrix<T>& x, std::span<const Label> labels, std::size_t classes, T intensity) {
    check_rows(x.rows(), labels.size());
    if (x.cols() < classes)
        throw ShapeError("cannot embed " + std::to_string(classes) + " classes into " + std::to_string(x.cols()) +
                         " features");
    DenseMatrix<T> out = x;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        if (labels[r] >= classes)
            throw LabelError("label " + std::to_string(labels[r]) + " out of range for " + std::to_string(classes) +
                             " classes");
        auto row = out.row(r);
        std::fill(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(classes), T{0});
        row[labels[r]] = intensity;
    }
    return out;
}

template <class T>
T embedding_intensity(const DenseMatrix<T>& x) {
    T hi = 0;
    for (const T v : x.values()) hi = std::max(hi, v);
    return hi > 0 ? hi : T{1};
}

template <class T>
std::vector<T> ff_goodness(const DenseMatrix<T>& a) {
    std::vector<T> g(a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        T s = 0;
        for (const T v : a.row(r)) s += v * v;
        g[r] = s;
    }
    return g;
}

FfLosses ff_losses(double g_pos, double g_neg, double theta) {
    const double pos = softplus(theta - g_pos);
    const double neg = softplus(g_neg - theta);
    return {pos, neg, 0.5 * (pos + neg)};
}

template <class T>
DenseMatrix<T> l2_normalize_rows(const DenseMatrix<T>& a) {
    DenseMatrix<T> out = a;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto row = out.row(r);
        T s = 0;
        for (const T v : row) s += v * v;
        if (s <= 0) continue;
        const T inv = T{1} / std::sqrt(s);
        for (T& v : row) v *= inv;
    }
    return out;
}

template <class T>
FfLayerResult<T> ff_layer_grads(const LayerParams<T>& layer, const DenseMatrix<T>& x_pos, const DenseMatrix<T>& x_neg,
                                double theta) {
    if (!x_pos.same_shape(x_neg))
        throw ShapeError("positive and negative batches differ: " + x_pos.shape_str() + " vs " + x_neg.shape_str());
    auto pos = dense_forward(x_pos, layer);
    auto neg = dense_forward(x_neg, layer);
    pos.z.release();
    neg.z.release();
    const auto g_pos = ff_goodness(pos.a);
    const auto g_neg = ff_goodness(neg.a);
    const std::size_t n = x_pos.rows();
    const double inv_n = n ? 1.0 / static_cast<double>(n) : 0.0;

    FfLayerResult<T> out;
    DenseMatrix<T> dz_pos(n, layer.fan_out());
    DenseMatrix<T> dz_neg(n, layer.fan_out());
    for (std::size_t r = 0; r < n; ++r) {
        out.loss += ff_losses(g_pos[r], g_neg[r], theta).total * inv_n;
        // dL/dg times dg/da = 2a; relu(z) already zeroes the masked units
        const T sp = static_cast<T>(-sigmoid(theta - g_pos[r]) * inv_n);
        const T sn = static_cast<T>(sigmoid(g_neg[r] - theta) * inv_n);
        auto ap = pos.a.row(r), an = neg.a.row(r);
        auto dp = dz_pos.row(r), dn = dz_neg.row(r);
        for (std::size_t c = 0; c < ap.size(); ++c) {
            dp[c] = sp * ap[c];
            dn[c] = sn * an[c];
        }
    }
    out.dW = matmul_tn(x_pos, dz_pos);
    axpy(T{1}, matmul_tn(x_neg, dz_neg), out.dW);
    if (layer.has_bias()) {
        out.db = column_sum(dz_pos);
        axpy(T{1}, column_sum(dz_neg), *out.db);
    }
    out.a_pos = std::move(pos.a);
    out.a_neg = std::move(neg.a);
    return out;
}

std::vector<Label> sample_negative_labels(std::span<const Label> y, std::size_t classes, std::mt19937_64& gen) {
    if (classes < 2) throw ConfigError("negative labels need at least two classes");
    std::vector<Label> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] >= classes) throw LabelError("label " + std::to_string(y[i]) + " out of range");
        auto r = static_cast<Label>(uniform<double>(gen, 0.0, static_cast<double>(classes - 1)));
        if (r >= classes - 1) r = static_cast<Label>(classes - 2);
        out[i] = r >= y[i] ? r + 1 : r;
    }
    return out;
}

template <class T>
BatchStats ff_train_batch(Model<T>& model, const DenseMatrix<T>& X, std::span<const Label> y, const TrainConfig& cfg,
                          std::mt19937_64& negatives) {
    check_rows(X.rows(), y.size());
    if (model.classes < 2) throw ConfigError("forward-forward training needs at least two classes");
    const T intensity = embedding_intensity(X);
    const auto wrong = sample_negative_labels(y, model.classes, negatives);
    DenseMatrix<T> in_pos = embed_labels(X, y, model.classes, intensity);
    DenseMatrix<T> in_neg = embed_labels(X, wrong, model.classes, intensity);

    BatchStats st;
    st.samples = y.size();
    st.has_accuracy = false;
    for (std::size_t i = 0; i < model.depth(); ++i) {
        auto& layer = model.layers[i];
        auto r = ff_layer_grads(layer, in_pos, in_neg, cfg.theta);
        check_loss(r.loss, static_cast<int>(i + 1));
        optimizer_step(cfg.optimizer, layer.W, r.dW, layer.opt_W, cfg.lr);
        if (layer.b) optimizer_step(cfg.optimizer, *layer.b, *r.db, layer.opt_b, cfg.lr);
        st.layer_loss.push_back(r.loss);
        in_pos = l2_normalize_rows(r.a_pos);
        in_neg = l2_normalize_rows(r.a_neg);
    }
    return st;
}

// ---- Convolutional MF ----------------------------------------------------

template <class T>
BatchStats mf_train_conv_batch(ConvModel<T>& model, const DenseMatrix<T>& X, std::span<const Label> y,
                               const TrainConfig& cfg) {
    check_rows(X.rows(), y.size());
    BatchStats st;
    st.samples = y.size();
    DenseMatrix<T> total(X.rows(), model.classes);
    DenseMatrix<T> h;
    for (std::size_t i = 0; i < model.depth(); ++i) {
        auto& block = model.blocks[i];
        const DenseMatrix<T>& in = i == 0 ? X : h;
        auto rec = conv_block_forward(in, block);
        auto G = projection_goodness(rec.pooled, block.M);
        auto ce = cross_entropy_with_grad(G, y);
        check_loss(ce.loss, static_cast<int>(i + 1));
        auto g = conv_local_grads(in, rec, ce.grad, block);
        optimizer_step(cfg.optimizer, block.kernels, g.dkernels, block.opt_K, cfg.lr);
        optimizer_step(cfg.optimizer, block.M, g.dM, block.opt_M, cfg.lr);
        st.layer_loss.push_back(ce.loss);
        st.layer_correct.push_back(count_hits(argmax_rows(G), y));
        axpy(T{1}, G, total);
        h = std::move(rec.pooled);
    }
    st.aggregate_correct = count_hits(argmax_rows(total), y);
    return st;
}

// ---- Reports ---------------------------------------------------------------

std::string RunReport::to_csv() const {
    std::ostringstream os;
    os << kCsvHeader << "\n" << std::setprecision(9);
    for (const auto& r : rows)
        os << r.epoch << "," << r.layer_index << "," << r.train_loss << "," << r.train_acc << "," << r.test_acc << ","
           << r.peak_bytes << "," << r.epoch_seconds << "\n";
    return os.str();
}

void RunReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << to_csv();
}

std::vector<ReportRow> RunReport::aggregate_rows() const {
    std::vector<ReportRow> out;
    for (const auto& r : rows)
        if (r.layer_index < 0) out.push_back(r);
    return out;
}

bool RunReport::same_results(const RunReport& other) const {
    auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
    if (algorithm != other.algorithm || rows.size() != other.rows.size()) return false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto &a = rows[i], &b = other.rows[i];
        if (a.epoch != b.epoch || a.layer_index != b.layer_index || !same(a.train_loss, b.train_loss) ||
            !same(a.train_acc, b.train_acc) || !same(a.test_acc, b.test_acc))
            return false;
    }
    return true;
}

// ---- Epoch loop ------------------------------------------------------------

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    auto gen = make_stream(seed, static_cast<std::uint32_t>(epoch), StreamRole::Shuffle);
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(gen() % i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

template <class T>
DenseMatrix<T> batch_rows(const Dataset& ds, std::span<const std::size_t> index) {
    if constexpr (std::is_same_v<T, float>)
        return gather_rows(ds.X, index);
    else
        return gather_rows(ds.X, index).template cast<T>();
}

namespace {

std::vector<Label> batch_labels(const Dataset& ds, std::span<const std::size_t> index) {
    std::vector<Label> y(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) y[i] = ds.y[index[i]];
    return y;
}

std::string batch_context(std::size_t epoch, std::size_t batch) {
    return "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ": ";
}

// Runs `fn`, re-raising trainer errors with the epoch and batch prefixed.
template <class Fn>
void with_batch_context(std::size_t epoch, std::size_t batch, Fn&& fn) {
    try {
        fn();
    } catch (const NumericError& e) {
        throw NumericError(batch_context(epoch, batch) + e.what(), e.layer());
    } catch (const LabelError& e) {
        throw LabelError(batch_context(epoch, batch) + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(batch_context(epoch, batch) + e.what());
    } catch (const ShapeError& e) {
        throw ShapeError(batch_context(epoch, batch) + e.what());
    }
}

void check_dataset(const Dataset& ds, std::size_t features, std::size_t classes, const char* what) {
    if (ds.size() == 0) throw DataError(std::string(what) + " set is empty");
    if (ds.X.rows() != ds.size()) throw DataError(std::string(what) + " set has mismatched rows and labels");
    if (ds.features() != features)
        throw ShapeError(std::string(what) + " set has " + std::to_string(ds.features()) +
                         " features, model expects " + std::to_string(features));
    for (const Label l : ds.y)
        if (l >= classes)
            throw LabelError(std::string(what) + " label " + std::to_string(l) + " out of range for " +
                             std::to_string(classes) + " classes");
}

double ratio(std::size_t hits, std::size_t n) {
    return n ? static_cast<double>(hits) / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

template <class T>
EpochTotals sequential_batches(Model<T>& model, const Dataset& train, std::span<const std::size_t> order,
                               const TrainConfig& cfg, std::size_t epoch, const TrainHooks<T>& hooks) {
    EpochTotals totals;
    auto negatives = make_stream(cfg.seed, static_cast<std::uint32_t>(epoch), StreamRole::Negatives);
    const std::size_t n = order.size();
    for (std::size_t b = 0, start = 0; start < n; ++b, start += cfg.batch_size) {
        const auto idx = order.subspan(start, std::min(cfg.batch_size, n - start));
        with_batch_context(epoch, b, [&] {
            const auto X = batch_rows<T>(train, idx);
            const auto y = batch_labels(train, idx);
            switch (cfg.algorithm) {
                case Algorithm::MF: totals.add(mf_train_batch(model, X, y, cfg)); break;
                case Algorithm::BP: totals.add(bp_train_batch(model, X, y, cfg)); break;
                case Algorithm::FA: totals.add(fa_train_batch(model, X, y, cfg)); break;
                case Algorithm::DFA: totals.add(dfa_train_batch(model, X, y, cfg)); break;
                case Algorithm::FF: totals.add(ff_train_batch(model, X, y, cfg, negatives)); break;
            }
        });
        if (hooks.on_batch_end) hooks.on_batch_end(epoch, b);
    }
    return totals;
}

}  // namespace

template <class T>
RunReport train_epochs(Model<T>& model, const Dataset& train, const Dataset* test, const TrainConfig& cfg,
                       const TrainHooks<T>& hooks) {
    cfg.validate();
    if (cfg.algorithm != model.algorithm)
        throw ConfigError("config algorithm " + std::string(to_string(cfg.algorithm)) + " does not match model " +
                          std::string(to_string(model.algorithm)));
    RunReport report;
    report.algorithm = std::string(to_string(cfg.algorithm));
    check_dataset(train, model.input_dim, model.classes, "training");
    if (test) check_dataset(*test, model.input_dim, model.classes, "test");
    if (cfg.epochs == 0) return report;

    model.allocate_optimizer_state(cfg.optimizer);
    const bool persist = !cfg.persist_dir.empty();
    if (persist) std::filesystem::create_directories(cfg.persist_dir);
    const DenseMatrix<T> X_test = test ? to_precision<T>(test->X) : DenseMatrix<T>{};
    const bool layered = cfg.algorithm == Algorithm::MF || cfg.algorithm == Algorithm::FF;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (persist)
            for (std::size_t i = 0; i < model.depth(); ++i) offload_layer(model.layers[i], layer_file(cfg.persist_dir, i));
        tracker_reset();
        const auto t0 = std::chrono::steady_clock::now();
        const auto order = epoch_order(train.size(), cfg.seed, epoch);
        const EpochTotals totals = cfg.pipeline ? pipelined_batches(model, train, order, cfg, epoch)
                                                : sequential_batches(model, train, order, cfg, epoch, hooks);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const std::int64_t peak = tracker_peak();
        if (persist)
            for (std::size_t i = 0; i < model.depth(); ++i) restore_layer(model.layers[i], layer_file(cfg.persist_dir, i));

        const double n = static_cast<double>(totals.samples);
        std::vector<double> layer_test;
        double aggregate_test = std::numeric_limits<double>::quiet_NaN();
        if (test) {
            if (cfg.algorithm == Algorithm::MF) {
                const auto p = mf_predict_all(model, X_test);
                aggregate_test = accuracy(p.ff, test->y);
                for (const auto& l : p.per_layer) layer_test.push_back(accuracy(l, test->y));
            } else {
                aggregate_test = accuracy(predict(model, X_test, PredictionMode::FF, cfg.ff_include_first_layer), test->y);
            }
        }
        if (layered) {
            for (std::size_t i = 0; i < totals.loss_sum.size(); ++i) {
                ReportRow row;
                row.epoch = epoch;
                row.layer_index = static_cast<int>(i + 1);
                row.train_loss = totals.loss_sum[i] / n;
                if (totals.has_accuracy && i < totals.correct.size()) row.train_acc = ratio(totals.correct[i], totals.samples);
                if (i < layer_test.size()) row.test_acc = layer_test[i];
                row.peak_bytes = peak;
                row.epoch_seconds = seconds;
                report.rows.push_back(row);
            }
        }
        ReportRow agg;
        agg.epoch = epoch;
        double loss = 0.0;
        for (const double s : totals.loss_sum) loss += s / n;
        agg.train_loss = totals.loss_sum.empty() ? 0.0 : loss / static_cast<double>(totals.loss_sum.size());
        if (totals.has_accuracy) agg.train_acc = ratio(totals.aggregate_correct, totals.samples);
        agg.test_acc = aggregate_test;
        agg.peak_bytes = peak;
        agg.epoch_seconds = seconds;
        report.rows.push_back(agg);
        if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, model);
    }
    return report;
}

template <class T>
RunReport train_conv_epochs(ConvModel<T>& model, const Dataset& train, const Dataset* test, const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.algorithm != Algorithm::MF) throw ConfigError("convolutional models train with mf only");
    if (model.blocks.empty()) throw ConfigError("convolutional model has no blocks");
    RunReport report;
    report.algorithm = "mf";
    const std::size_t features = model.blocks.front().input.size();
    check_dataset(train, features, model.classes, "training");
    if (test) check_dataset(*test, features, model.classes, "test");
    const DenseMatrix<T> X_test = test ? to_precision<T>(test->X) : DenseMatrix<T>{};

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        tracker_reset();
        const auto t0 = std::chrono::steady_clock::now();
        const auto order = epoch_order(train.size(), cfg.seed, epoch);
        EpochTotals totals;
        const std::span<const std::size_t> all(order);
        for (std::size_t b = 0, start = 0; start < order.size(); ++b, start += cfg.batch_size) {
            const auto idx = all.subspan(start, std::min(cfg.batch_size, order.size() - start));
            with_batch_context(epoch, b, [&] {
                totals.add(mf_train_conv_batch(model, batch_rows<T>(train, idx), batch_labels(train, idx), cfg));
            });
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const std::int64_t peak = tracker_peak();

        std::vector<double> layer_test;
        double aggregate_test = std::numeric_limits<double>::quiet_NaN();
        if (test) {
            const auto s = conv_forward_goodness(model, X_test);
            DenseMatrix<T> total(X_test.rows(), model.classes);
            for (const auto& g : s.layers) {
                layer_test.push_back(accuracy(argmax_rows(g), test->y));
                axpy(T{1}, g, total);
            }
            aggregate_test = accuracy(argmax_rows(total), test->y);
        }
        const double n = static_cast<double>(totals.samples);
        double loss = 0.0;
        for (std::size_t i = 0; i < totals.loss_sum.size(); ++i) {
            ReportRow row;
            row.epoch = epoch;
            row.layer_index = static_cast<int>(i + 1);
            row.train_loss = totals.loss_sum[i] / n;
            row.train_acc = ratio(totals.correct[i], totals.samples);
            if (i < layer_test.size()) row.test_acc = layer_test[i];
            row.peak_bytes = peak;
            row.epoch_seconds = seconds;
            report.rows.push_back(row);
            loss += row.train_loss;
        }
        ReportRow agg;
        agg.epoch = epoch;
        agg.train_loss = loss / static_cast<double>(std::max<std::size_t>(1, totals.loss_sum.size()));
        agg.train_acc = ratio(totals.aggregate_correct, totals.samples);
        agg.test_acc = aggregate_test;
        agg.peak_bytes = peak;
        agg.epoch_seconds = seconds;
        report.rows.push_back(agg);
    }
    return report;
}

// ---- Weight persistence ----------------------------------------------------

template <class T>
void offload_layer(LayerParams<T>& layer, const std::filesystem::path& file) {
    std::vector<TensorRecord> t;
    auto put = [&](const std::string& name, DenseMatrix<T>& m) {
        if (!m.empty()) t.push_back(TensorRecord::from_matrix(name, m));
        m.release();
    };
    auto put_state = [&](const std::string& name, AdamState<T>& s) {
        t.push_back(TensorRecord::from_u32(name + ".t", {static_cast<std::uint32_t>(s.t),
                                                          static_cast<std::uint32_t>(s.t >> 32)}));
        put(name + ".m", s.m);
        put(name + ".v", s.v);
    };
    t.push_back(TensorRecord::from_u32("shape", {static_cast<std::uint32_t>(layer.fan_in()),
                                                 static_cast<std::uint32_t>(layer.fan_out()),
                                                 static_cast<std::uint32_t>(layer.M.rows())}));
    put("W", layer.W);
    put("M", layer.M);
    put_state("opt_W", layer.opt_W);
    put_state("opt_M", layer.opt_M);
    if (layer.b) {
        put("b", *layer.b);
        put_state("opt_b", layer.opt_b);
    }
    write_container(file, t);
}

template <class T>
void restore_layer(LayerParams<T>& layer, const std::filesystem::path& file) {
    const auto t = read_container(file);
    auto get = [&](const std::string& name) {
        const auto* r = find_tensor_opt(t, name);
        return r ? r->template to_matrix<T>() : DenseMatrix<T>{};
    };
    auto get_state = [&](const std::string& name, AdamState<T>& s) {
        const auto steps = find_tensor(t, name + ".t").to_u32();
        s.t = steps.at(0) | (static_cast<std::uint64_t>(steps.at(1)) << 32);
        s.m = get(name + ".m");
        s.v = get(name + ".v");
    };
    layer.W = get("W");
    layer.M = get("M");
    get_state("opt_W", layer.opt_W);
    get_state("opt_M", layer.opt_M);
    if (layer.b) {
        *layer.b = get("b");
        get_state("opt_b", layer.opt_b);
    }
}

#define MONO_INSTANTIATE(T)                                                                                          \
    template LayerStepResult<T> mf_layer_step(LayerParams<T>&, const DenseMatrix<T>&, std::span<const Label>,        \
                                              const TrainConfig&, int);                                              \
    template BatchStats mf_train_batch(Model<T>&, const DenseMatrix<T>&, std::span<const Label>, const TrainConfig&); \
    template BackpropGrads<T> backprop_gradients(const Model<T>&, const DenseMatrix<T>&, std::span<const Label>,     \
                                                 Transport);                                                         \
    template BatchStats bp_train_batch(Model<T>&, const DenseMatrix<T>&, std::span<const Label>, const TrainConfig&); \
    template BatchStats fa_train_batch(Model<T>&, const DenseMatrix<T>&, std::span<const Label>, const TrainConfig&); \
    template BatchStats dfa_train_batch(Model<T>&, const DenseMatrix<T>&, std::span<const Label>,                    \
                                        const TrainConfig&);                                                         \
    template DenseMatrix<T> embed_labels(const DenseMatrix<T>&, std::span<const Label>, std::size_t, T);             \
    template T embedding_intensity(const DenseMatrix<T>&);                                                           \
    template std::vector<T> ff_goodness(const DenseMatrix<T>&);                                                      \
    template DenseMatrix<T> l2_normalize_rows(const DenseMatrix<T>&);                                                \
    template FfLayerResult<T> ff_layer_grads(const LayerParams<T>&, const DenseMatrix<T>&, const DenseMatrix<T>&,    \
                                             double);                                                                \
    template BatchStats ff_train_batch(Model<T>&, const DenseMatrix<T>&, std::span<const Label>, const TrainConfig&, \
                                       std::mt19937_64&);                                                            \
    template BatchStats mf_train_conv_batch(ConvModel<T>&, const DenseMatrix<T>&, std::span<const Label>,            \
                                            const TrainConfig&);                                                     \
    template DenseMatrix<T> batch_rows<T>(const Dataset&, std::span<const std::size_t>);                             \
    template RunReport train_epochs(Model<T>&, const Dataset&, const Dataset*, const TrainConfig&,                   \
                                    const TrainHooks<T>&);                                                           \
    template RunReport train_conv_epochs(ConvModel<T>&, const Dataset&, const Dataset*, const TrainConfig&);         \
    template void offload_layer(LayerParams<T>&, const std::filesystem::path&);                                      \
    template void restore_layer(LayerParams<T>&, const std::filesystem::path&);

MONO_INSTANTIATE(float)
MONO_INSTANTIATE(double)

}  // namespace mono
