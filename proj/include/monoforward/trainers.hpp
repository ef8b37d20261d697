#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "monoforward/data.hpp"
#include "monoforward/model.hpp"

namespace mono {

struct TrainConfig {
    Algorithm algorithm = Algorithm::MF;
    double lr = 0.001;
    std::size_t batch_size = 64;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;
    double theta = 2.0;  // FF goodness threshold
    bool bias = false;
    OptimizerKind optimizer = OptimizerKind::Adam;
    Precision precision = Precision::Single;
    bool ff_include_first_layer = false;  // FF multi-pass prediction
    bool pipeline = false;                // MF only: one thread per layer
    std::size_t stage_capacity = 2;
    // MF only: when set, layers not being trained live on disk here.
    std::filesystem::path persist_dir;

    void validate() const;
};

struct BatchStats {
    std::vector<double> layer_loss;          // one entry per layer (BP/FA/DFA: one entry)
    std::vector<std::size_t> layer_correct;  // MF: per-layer argmax hits
    std::size_t aggregate_correct = 0;
    std::size_t samples = 0;
    bool has_accuracy = true;
};

/// Sample-weighted running totals of BatchStats over one epoch.
struct EpochTotals {
    std::vector<double> loss_sum;
    std::vector<std::size_t> correct;
    std::size_t aggregate_correct = 0;
    std::size_t samples = 0;
    bool has_accuracy = true;

    void add(const BatchStats& s);
};

// ---- Mono-Forward --------------------------------------------------------

template <class T>
struct LayerStepResult {
    DenseMatrix<T> a;         // activations computed before this layer's update
    DenseMatrix<T> goodness;  // G_i = a M^T, also pre-update
    double loss = 0.0;
};

/// Forward, goodness, local cross-entropy, closed-form gradients and one
/// optimizer step on W_i (then b_i) and M_i of a single layer. Reads nothing but
/// this layer's parameters and its input.
template <class T>
LayerStepResult<T> mf_layer_step(LayerParams<T>& layer, const DenseMatrix<T>& a_prev, std::span<const Label> labels,
                                 const TrainConfig& cfg, int layer_index);

template <class T>
BatchStats mf_train_batch(Model<T>& model, const DenseMatrix<T>& X, std::span<const Label> y, const TrainConfig& cfg);

// ---- BP / FA / DFA -------------------------------------------------------

enum class Transport { Exact, Feedback, Direct };

template <class T>
struct BackpropGrads {
    double loss = 0.0;
    std::vector<LocalGrads<T>> layers;  // dM only on the last layer
};

/// Loss and gradients with respect to every W/b and the output projection,
/// without touching the parameters.
template <class T>
BackpropGrads<T> backprop_gradients(const Model<T>& model, const DenseMatrix<T>& X, std::span<const Label> y,
                                    Transport transport);

template <class T>
BatchStats bp_train_batch(Model<T>& model, const DenseMatrix<T>& X, std::span<const Label> y, const TrainConfig& cfg);
template <class T>
BatchStats fa_train_batch(Model<T>& model, const DenseMatrix<T>& X, std::span<const Label> y, const TrainConfig& cfg);
template <class T>
BatchStats dfa_train_batch(Model<T>& model, const DenseMatrix<T>& X, std::span<const Label> y,
                           const TrainConfig& cfg);

// ---- Forward-Forward -----------------------------------------------------

/// Overwrites the first `classes` features of a copy of x with onehot(label)
/// scaled to `intensity`.
template <class T>
DenseMatrix<T> embed_labels(const DenseMatrix<T>& x, std::span<const Label> labels, std::size_t classes, T intensity);

/// Intensity used for label embedding: the largest value in x, or 1 if x has no
/// positive entry.
template <class T>
T embedding_intensity(const DenseMatrix<T>& x);

/// Sum of squared activations per row.
template <class T>
std::vector<T> ff_goodness(const DenseMatrix<T>& a);

struct FfLosses {
    double pos;
    double neg;
    double total;
};
/// softplus(theta - g_pos), softplus(g_neg - theta) and their mean.
FfLosses ff_losses(double g_pos, double g_neg, double theta);

/// Divides each row by its L2 norm (rows of zeros stay zero).
template <class T>
DenseMatrix<T> l2_normalize_rows(const DenseMatrix<T>& a);

template <class T>
struct FfLayerResult {
    double loss = 0.0;  // batch mean of the total loss
    DenseMatrix<T> dW;
    std::optional<DenseMatrix<T>> db;
    DenseMatrix<T> a_pos;
    DenseMatrix<T> a_neg;
};

/// One layer's loss and gradient with respect to its own weights for a
/// positive/negative input pair.
template <class T>
FfLayerResult<T> ff_layer_grads(const LayerParams<T>& layer, const DenseMatrix<T>& x_pos, const DenseMatrix<T>& x_neg,
                                double theta);

/// Wrong label drawn uniformly from the classes - 1 alternatives.
std::vector<Label> sample_negative_labels(std::span<const Label> y, std::size_t classes, std::mt19937_64& gen);

template <class T>
BatchStats ff_train_batch(Model<T>& model, const DenseMatrix<T>& X, std::span<const Label> y, const TrainConfig& cfg,
                          std::mt19937_64& negatives);

// ---- Convolutional MF ----------------------------------------------------

template <class T>
BatchStats mf_train_conv_batch(ConvModel<T>& model, const DenseMatrix<T>& X, std::span<const Label> y,
                               const TrainConfig& cfg);

// ---- Epoch loop and reports ----------------------------------------------

struct ReportRow {
    std::size_t epoch = 0;
    int layer_index = -1;  // 1-based layer, -1 for the whole-model row
    double train_loss = 0.0;
    double train_acc = std::numeric_limits<double>::quiet_NaN();
    double test_acc = std::numeric_limits<double>::quiet_NaN();
    std::int64_t peak_bytes = 0;
    double epoch_seconds = 0.0;
};

struct RunReport {
    std::string algorithm;
    std::vector<ReportRow> rows;

    static constexpr const char* kCsvHeader =
        "epoch,layer_index,train_loss,train_acc,test_acc,peak_bytes,epoch_seconds";
    std::string to_csv() const;
    void write_csv(const std::filesystem::path& path) const;
    /// Whole-model rows in epoch order.
    std::vector<ReportRow> aggregate_rows() const;
    /// Equal in every field except the measurements (peak bytes, wall time).
    bool same_results(const RunReport& other) const;
};

template <class T>
struct TrainHooks {
    std::function<void(std::size_t epoch, const Model<T>&)> on_epoch_end;
    std::function<void(std::size_t epoch, std::size_t batch)> on_batch_end;
};

/// Batch order for one epoch, from its own (seed, epoch) shuffle stream.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

template <class T>
DenseMatrix<T> batch_rows(const Dataset& ds, std::span<const std::size_t> index);

template <class T>
RunReport train_epochs(Model<T>& model, const Dataset& train, const Dataset* test, const TrainConfig& cfg,
                       const TrainHooks<T>& hooks = {});

template <class T>
RunReport train_conv_epochs(ConvModel<T>& model, const Dataset& train, const Dataset* test, const TrainConfig& cfg);

/// Write a layer (parameters and optimizer state) to disk and drop it from memory, or bring it back.
template <class T>
void offload_layer(LayerParams<T>& layer, const std::filesystem::path& file);
template <class T>
void restore_layer(LayerParams<T>& layer, const std::filesystem::path& file);

}  // namespace mono
