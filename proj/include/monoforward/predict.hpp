#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "monoforward/data.hpp"
#include "monoforward/model.hpp"

namespace mono {

/// Network forward passes issued by the prediction routines since the last reset.
std::uint64_t forward_pass_count();
void reset_forward_pass_count();

template <class T>
struct GoodnessStack {
    std::vector<DenseMatrix<T>> layers;  // G_i, batch x classes; empty for layers without projection
};

/// One forward pass collecting every layer's goodness.
template <class T>
GoodnessStack<T> mf_forward_goodness(const Model<T>& model, const DenseMatrix<T>& X);

/// argmax of the unweighted sum of all layers' goodness.
template <class T>
std::vector<Label> mf_predict_ff(const Model<T>& model, const DenseMatrix<T>& X);
/// argmax of the last layer's goodness; earlier projections are never read.
template <class T>
std::vector<Label> mf_predict_bp(const Model<T>& model, const DenseMatrix<T>& X);
/// argmax of each layer's goodness on its own.
template <class T>
std::vector<std::vector<Label>> per_layer_predict(const Model<T>& model, const DenseMatrix<T>& X);

struct MfPredictions {
    std::vector<Label> ff;
    std::vector<Label> bp;
    std::vector<std::vector<Label>> per_layer;
};
/// All three views from a single pass.
template <class T>
MfPredictions mf_predict_all(const Model<T>& model, const DenseMatrix<T>& X);

/// Embed each candidate label, run the net, and pick the label with the largest
/// summed sum-of-squares goodness. Issues exactly `classes` passes.
template <class T>
std::vector<Label> ff_predict_multipass(const Model<T>& model, const DenseMatrix<T>& X,
                                        bool include_first_layer = false);

/// The natural prediction for the model's algorithm: multi-pass for FF, the
/// requested mode for MF, the output head for BP/FA/DFA.
template <class T>
std::vector<Label> predict(const Model<T>& model, const DenseMatrix<T>& X, PredictionMode mode = PredictionMode::FF,
                           bool ff_include_first_layer = false);

double accuracy(std::span<const Label> predicted, std::span<const Label> truth);

/// sample_index,true_label,pred_ffmode,pred_bpmode,layer_1..layer_L
template <class T>
void write_evaluation_csv(const std::filesystem::path& path, const Model<T>& model, const Dataset& ds);

template <class T>
GoodnessStack<T> conv_forward_goodness(const ConvModel<T>& model, const DenseMatrix<T>& X);
template <class T>
std::vector<Label> conv_predict(const ConvModel<T>& model, const DenseMatrix<T>& X, PredictionMode mode);

}  // namespace mono
