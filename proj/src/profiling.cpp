#include "monoforward/profiling.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "monoforward/predict.hpp"
#include "monoforward/tracker.hpp"

namespace mono {
namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    return os;
}

std::vector<TracePoint> points_from_log(const std::vector<AllocationTracker::Event>& log) {
    std::vector<TracePoint> out;
    out.reserve(log.size());
    for (std::size_t i = 0; i < log.size(); ++i) out.push_back({i, log[i].live_bytes});
    return out;
}

std::size_t optimizer_slots(OptimizerKind opt) { return opt == OptimizerKind::Adam ? 3 : 1; }

}  // namespace

std::optional<double> ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) return std::nullopt;
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0) return std::nullopt;
    return sxy / sxx;
}

template <class T>
MemoryVsDepth memory_vs_depth(Algorithm algorithm, const std::vector<std::size_t>& depths, std::size_t width,
                              const Dataset& train, const TrainConfig& cfg) {
    if (depths.empty()) throw ConfigError("memory_vs_depth needs at least one depth");
    TrainConfig c = cfg;
    c.algorithm = algorithm;
    c.epochs = 1;
    MemoryVsDepth out;
    std::vector<double> xs, ys;
    for (const std::size_t depth : depths) {
        if (depth == 0) throw ConfigError("depth must be at least 1");
        const std::int64_t baseline = tracker_live();
        RunReport report;
        {
            ModelSpec spec{algorithm, train.features(), std::vector<std::size_t>(depth, width), train.classes,
                           cfg.bias, cfg.seed};
            auto model = make_model<T>(spec);
            report = train_epochs(model, train, nullptr, c);
        }
        MemoryProfile p;
        p.algorithm = algorithm;
        p.depth = depth;
        p.peak_bytes = report.rows.back().peak_bytes - baseline;
        out.profiles.push_back(p);
        xs.push_back(static_cast<double>(depth));
        ys.push_back(static_cast<double>(p.peak_bytes));
    }
    out.slope = ols_slope(xs, ys);
    return out;
}

std::int64_t analytic_bp_slope(std::size_t batch, std::size_t width, std::size_t element_size, OptimizerKind opt) {
    return static_cast<std::int64_t>(element_size * (2 * batch * width + optimizer_slots(opt) * width * width));
}

std::int64_t analytic_mf_slope(std::size_t width, std::size_t classes, std::size_t element_size, OptimizerKind opt) {
    return static_cast<std::int64_t>(element_size * optimizer_slots(opt) * (width * width + classes * width));
}

MemoryTrace summarize_trace(std::vector<TracePoint> points) {
    MemoryTrace t;
    t.points = std::move(points);
    if (t.points.empty()) return t;
    t.peak = t.valley = t.points.front().live_bytes;
    for (const auto& p : t.points) {
        t.peak = std::max(t.peak, p.live_bytes);
        t.valley = std::min(t.valley, p.live_bytes);
    }
    t.peak_to_valley = t.valley > 0 ? static_cast<double>(t.peak) / static_cast<double>(t.valley) : 0.0;
    return t;
}

template <class T>
MemoryTrace memory_trace(Model<T>& model, const Dataset& train, const TrainConfig& cfg) {
    const TrainConfig& c = cfg;
    model.allocate_optimizer_state(c.optimizer);
    auto& tracker = AllocationTracker::instance();
    tracker.take_event_log();
    tracker.enable_event_log(true);
    try {
        train_epochs(model, train, nullptr, c);
    } catch (...) {
        tracker.enable_event_log(false);
        throw;
    }
    tracker.enable_event_log(false);
    auto log = tracker.take_event_log();
    if (log.size() <= 1) log.clear();  // only the starting level, nothing ran
    return summarize_trace(points_from_log(log));
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

template <class T>
EpochTiming epoch_time_ratio(const Dataset& train, const std::vector<std::size_t>& widths, const TrainConfig& cfg,
                             std::size_t epochs) {
    if (epochs < 5) throw ConfigError("epoch timing needs at least 5 epochs");
    auto run = [&](Algorithm algo, bool pipeline) {
        TrainConfig c = cfg;
        c.algorithm = algo;
        c.pipeline = pipeline;
        c.epochs = epochs;
        c.persist_dir.clear();
        auto model = make_model<T>({algo, train.features(), widths, train.classes, cfg.bias, cfg.seed});
        std::vector<double> times;
        for (const auto& r : train_epochs(model, train, nullptr, c).aggregate_rows()) times.push_back(r.epoch_seconds);
        return median(times);
    };
    EpochTiming t;
    t.epochs = epochs;
    t.bp_median = run(Algorithm::BP, false);
    t.mf_median = run(Algorithm::MF, true);
    t.mf_sequential_median = run(Algorithm::MF, false);
    t.ratio = t.mf_median > 0 ? t.bp_median / t.mf_median : 0.0;
    t.sequential_ratio = t.mf_sequential_median > 0 ? t.bp_median / t.mf_sequential_median : 0.0;
    return t;
}

template <class T>
std::vector<LayerAccuracy> per_layer_report(const Model<T>& model, const Dataset& test) {
    if (model.algorithm != Algorithm::MF) throw ConfigError("per-layer reports need an mf model");
    DenseMatrix<T> X;
    if constexpr (std::is_same_v<T, float>)
        X = test.X;
    else
        X = test.X.template cast<T>();
    const auto p = mf_predict_all(model, X);
    std::vector<LayerAccuracy> rows;
    for (std::size_t i = 0; i < p.per_layer.size(); ++i)
        rows.push_back({static_cast<int>(i + 1), accuracy(p.per_layer[i], test.y)});
    rows.push_back({-1, accuracy(p.ff, test.y)});
    return rows;
}

void write_per_layer_csv(const std::filesystem::path& path, const std::vector<LayerAccuracy>& rows) {
    auto os = open_out(path);
    os << "layer_index,test_acc\n";
    for (const auto& r : rows) os << r.layer_index << "," << r.accuracy << "\n";
}

void write_memory_csv(const std::filesystem::path& path, const MemoryVsDepth& result) {
    auto os = open_out(path);
    os << "algorithm,depth,peak_bytes\n";
    for (const auto& p : result.profiles) os << to_string(p.algorithm) << "," << p.depth << "," << p.peak_bytes << "\n";
}

void write_memory_plot(const std::filesystem::path& path, const MemoryVsDepth& result) {
    auto os = open_out(path);
    os << "# depth peak_bytes\n";
    for (const auto& p : result.profiles) os << p.depth << " " << p.peak_bytes << "\n";
}

void write_trace_plot(const std::filesystem::path& path, const MemoryTrace& trace) {
    auto os = open_out(path);
    os << "# step live_bytes\n";
    for (const auto& p : trace.points) os << p.step << " " << p.live_bytes << "\n";
}

#define MONO_INSTANTIATE(T)                                                                                      \
    template MemoryVsDepth memory_vs_depth<T>(Algorithm, const std::vector<std::size_t>&, std::size_t,           \
                                              const Dataset&, const TrainConfig&);                               \
    template MemoryTrace memory_trace(Model<T>&, const Dataset&, const TrainConfig&);                            \
    template EpochTiming epoch_time_ratio<T>(const Dataset&, const std::vector<std::size_t>&, const TrainConfig&, \
                                             std::size_t);                                                       \
    template std::vector<LayerAccuracy> per_layer_report(const Model<T>&, const Dataset&);

MONO_INSTANTIATE(float)
MONO_INSTANTIATE(double)

}  // namespace mono
