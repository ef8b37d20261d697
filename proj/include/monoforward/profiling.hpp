#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "monoforward/trainers.hpp"

namespace mono {

struct TracePoint {
    std::size_t step = 0;  // allocator event index
    std::int64_t live_bytes = 0;
};

struct MemoryProfile {
    Algorithm algorithm = Algorithm::MF;
    std::size_t depth = 0;
    std::int64_t peak_bytes = 0;  // above the level before the model was built
    std::vector<TracePoint> trace;
};

struct MemoryVsDepth {
    std::vector<MemoryProfile> profiles;
    std::optional<double> slope;  // bytes per layer; absent with fewer than two depths
};

/// Ordinary least squares slope of y on x; absent unless x has two distinct values.
std::optional<double> ols_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Builds a width-`width` network for each depth, trains one epoch under the
/// tracker and fits peak bytes against depth.
template <class T>
MemoryVsDepth memory_vs_depth(Algorithm algorithm, const std::vector<std::size_t>& depths, std::size_t width,
                              const Dataset& train, const TrainConfig& cfg);

/// Expected growth of the BP peak per added layer: stored z and a for every
/// sample plus the layer's weights and optimizer slots.
std::int64_t analytic_bp_slope(std::size_t batch, std::size_t width, std::size_t element_size, OptimizerKind opt);
/// Expected growth of the MF peak per added layer: weights, projection and their optimizer slots.
std::int64_t analytic_mf_slope(std::size_t width, std::size_t classes, std::size_t element_size, OptimizerKind opt);

struct MemoryTrace {
    std::vector<TracePoint> points;
    std::int64_t peak = 0;
    std::int64_t valley = 0;
    double peak_to_valley = 0.0;  // 0 for an empty trace
};

/// Live tracked bytes after every allocation event while training for cfg.epochs epochs.
template <class T>
MemoryTrace memory_trace(Model<T>& model, const Dataset& train, const TrainConfig& cfg);

MemoryTrace summarize_trace(std::vector<TracePoint> points);

struct EpochTiming {
    double bp_median = 0.0;
    double mf_median = 0.0;             // pipelined MF
    double mf_sequential_median = 0.0;
    double ratio = 0.0;                 // bp / pipelined mf
    double sequential_ratio = 0.0;      // bp / sequential mf
    std::size_t epochs = 0;
};

double median(std::vector<double> v);

/// Median epoch wall time of BP, pipelined MF and sequential MF on the same
/// architecture over `epochs` (at least 5) epochs each.
template <class T>
EpochTiming epoch_time_ratio(const Dataset& train, const std::vector<std::size_t>& widths, const TrainConfig& cfg,
                             std::size_t epochs = 5);

struct LayerAccuracy {
    int layer_index = -1;  // 1-based, -1 for the summed-goodness row
    double accuracy = 0.0;
};

/// One row per layer from its own goodness, then the summed-goodness row.
template <class T>
std::vector<LayerAccuracy> per_layer_report(const Model<T>& model, const Dataset& test);

void write_per_layer_csv(const std::filesystem::path& path, const std::vector<LayerAccuracy>& rows);
void write_memory_csv(const std::filesystem::path& path, const MemoryVsDepth& result);
/// Whitespace-separated columns for gnuplot.
void write_memory_plot(const std::filesystem::path& path, const MemoryVsDepth& result);
void write_trace_plot(const std::filesystem::path& path, const MemoryTrace& trace);

}  // namespace mono
