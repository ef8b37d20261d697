#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "monoforward/conv.hpp"
#include "monoforward/layers.hpp"

namespace mono {

enum class Algorithm { MF, BP, FF, FA, DFA };
enum class PredictionMode { FF, BP };

std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view s);

/// Dense network shared by all five trainers.
///
/// MF keeps a projection M_i on every layer. BP, FA and DFA keep only the last
/// layer's M, which then is the ordinary linear output head (no bias). FF keeps
/// none. FA/DFA additionally own fixed random feedback matrices.
template <class T>
struct Model {
    Algorithm algorithm = Algorithm::MF;
    std::size_t input_dim = 0;
    std::size_t classes = 0;
    std::uint64_t seed = 0;
    std::vector<LayerParams<T>> layers;
    // FA: feedback[i] replaces the transport into layer i's activations
    //     (W_{i+1}^T shaped for hidden layers, M_L shaped for the last).
    // DFA: feedback[i] is classes x fan_out(i), carrying the output error directly.
    std::vector<DenseMatrix<T>> feedback;

    std::size_t depth() const noexcept { return layers.size(); }
    std::vector<std::size_t> widths() const;
    void allocate_optimizer_state(OptimizerKind kind);
};

struct ModelSpec {
    Algorithm algorithm = Algorithm::MF;
    std::size_t input_dim = 0;
    std::vector<std::size_t> widths;
    std::size_t classes = 0;
    bool bias = false;
    std::uint64_t seed = 0;
};

template <class T>
Model<T> make_model(const ModelSpec& spec);

/// Trainable scalars retained for the given prediction mode. BP-mode drops
/// M_1..M_{L-1}; FF networks have no projections in either mode.
template <class T>
std::size_t count_parameters(const Model<T>& model, PredictionMode mode);

/// Fresh random feedback matrices for FA/DFA from the Feedback stream.
template <class T>
std::vector<DenseMatrix<T>> make_feedback(const Model<T>& model);

template <class T>
void save_model(const Model<T>& model, const std::filesystem::path& path);
template <class T>
Model<T> load_model(const std::filesystem::path& path);

/// Stack of conv blocks trained layerwise with MF; the last block's projection
/// acts as the final fully connected layer.
template <class T>
struct ConvModel {
    std::size_t classes = 0;
    std::uint64_t seed = 0;
    std::vector<ConvLayerParams<T>> blocks;

    std::size_t depth() const noexcept { return blocks.size(); }
};

template <class T>
ConvModel<T> make_conv_model(ImageShape input, const std::vector<std::size_t>& channels, std::size_t classes,
                             std::uint64_t seed);

template <class T>
std::size_t count_parameters(const ConvModel<T>& model, PredictionMode mode);

}  // namespace mono
