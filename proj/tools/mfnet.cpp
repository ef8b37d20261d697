// mfnet: train, evaluate, profile and report on dense and convolutional networks.
//
//   mfnet train --algo mf --arch 1000,1000 --dataset mnist --epochs 5 --out runs/mf
//   mfnet eval --model runs/mf/model.ckpt --dataset mnist --pred both
//   mfnet profile --params --arch 1000,1000
//   mfnet profile --mem-vs-depth 2,4,6,8 --width 1000 --dataset mnist10k
//   mfnet report --per-layer --model runs/mf/model.ckpt --dataset mnist
//
// Every option can also come from a key=value file (--config); the resolved
// options are written to <out>/config.txt next to the outputs.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "monoforward/data.hpp"
#include "monoforward/errors.hpp"
#include "monoforward/pipeline.hpp"
#include "monoforward/predict.hpp"
#include "monoforward/profiling.hpp"
#include "monoforward/trainers.hpp"

namespace fs = std::filesystem;
using namespace mono;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4, kCheckpoint = 5 };

struct Options {
    std::string algo = "mf";
    std::string arch = "1000,1000";
    std::string dataset = "mnist";
    std::string data_dir;
    std::string out = "mfnet-out";
    std::string model;
    std::size_t epochs = 1;
    std::size_t batch = 64;
    double lr = 0.001;
    double theta = 2.0;
    std::uint64_t seed = 0;
    bool bias = false;
    std::string optimizer = "adam";
    std::string precision = "single";
    bool pipeline = false;
    std::size_t stage_capacity = 2;
    std::string persist_dir;
    bool ff_include_first = false;
    std::size_t train_limit = 0;
    std::size_t test_limit = 0;
    std::string pred = "both";
    // profile / report
    bool params = false;
    std::vector<std::size_t> mem_depths;
    std::size_t width = 1000;
    bool trace = false;
    bool timing = false;
    std::size_t input_dim = 784;
    std::size_t classes = 10;
    bool per_layer = false;
};

std::vector<std::size_t> parse_widths(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(tok, &used);
            if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw ConfigError("bad layer width '" + tok + "' in '" + s + "'");
        }
    }
    if (out.empty()) throw ConfigError("empty architecture");
    return out;
}

bool is_conv(const std::string& arch) { return arch.rfind("conv:", 0) == 0; }

ImageShape image_shape_for(std::size_t features) {
    if (features == 3 * 32 * 32) return {3, 32, 32};
    if (features == 28 * 28) return {1, 28, 28};
    throw ConfigError("conv architectures need 28x28 or 3x32x32 images, got " + std::to_string(features) +
                      " features");
}

std::string with_commas(std::size_t v) {
    std::string s = std::to_string(v);
    for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
    return s;
}

TrainConfig train_config(const Options& o) {
    TrainConfig c;
    c.algorithm = parse_algorithm(o.algo);
    c.lr = o.lr;
    c.batch_size = o.batch;
    c.epochs = o.epochs;
    c.seed = o.seed;
    c.theta = o.theta;
    c.bias = o.bias;
    if (o.optimizer == "adam")
        c.optimizer = OptimizerKind::Adam;
    else if (o.optimizer == "sgd")
        c.optimizer = OptimizerKind::Sgd;
    else
        throw ConfigError("unknown optimizer '" + o.optimizer + "' (expected adam or sgd)");
    c.precision = o.precision == "double" ? Precision::Double : Precision::Single;
    c.ff_include_first_layer = o.ff_include_first;
    c.pipeline = o.pipeline;
    c.stage_capacity = o.stage_capacity;
    c.persist_dir = o.persist_dir;
    c.validate();
    return c;
}

NamedSplit load_data(const Options& o) {
    const fs::path dir = o.data_dir.empty() ? data_dir() : fs::path(o.data_dir);
    auto s = load_named(o.dataset, dir, o.seed);
    if (o.train_limit) s.train = head(s.train, std::min(o.train_limit, s.train.size()));
    if (o.test_limit) s.test = head(s.test, std::min(o.test_limit, s.test.size()));
    return s;
}

void write_snapshot(CLI::App& app, const std::string& subcommand, const fs::path& out) {
    fs::create_directories(out);
    std::ofstream os(out / "config.txt");
    os << "# mfnet --config config.txt " << subcommand << "\n" << app.config_to_str(true, false);
}

template <class T>
DenseMatrix<T> features_of(const Dataset& ds) {
    if constexpr (std::is_same_v<T, float>)
        return ds.X;
    else
        return ds.X.template cast<T>();
}

template <class T>
int train(const Options& o, const TrainConfig& cfg) {
    const auto data = load_data(o);
    const fs::path out = o.out;
    if (is_conv(o.arch)) {
        if (cfg.algorithm != Algorithm::MF) throw ConfigError("conv architectures are trained with mf only");
        auto model = make_conv_model<T>(image_shape_for(data.train.features()), parse_widths(o.arch.substr(5)),
                                        data.train.classes, cfg.seed);
        const auto report = train_conv_epochs(model, data.train, &data.test, cfg);
        report.write_csv(out / "report.csv");
        std::cout << report.to_csv();
        std::cerr << "note: conv models are not checkpointed\n";
        return kOk;
    }
    auto model = make_model<T>({cfg.algorithm, data.train.features(), parse_widths(o.arch), data.train.classes,
                                cfg.bias, cfg.seed});
    const auto report = train_epochs(model, data.train, &data.test, cfg);
    report.write_csv(out / "report.csv");
    save_model(model, out / "model.ckpt");
    std::cout << report.to_csv();
    return kOk;
}

template <class T>
int eval(const Options& o) {
    if (o.model.empty()) throw ConfigError("eval needs --model");
    const auto model = load_model<T>(o.model);
    const auto data = load_data(o);
    const auto X = features_of<T>(data.test);
    std::vector<std::pair<std::string, PredictionMode>> modes;
    if (o.pred == "ff" || o.pred == "both") modes.push_back({"ff", PredictionMode::FF});
    if (o.pred == "bp" || o.pred == "both") modes.push_back({"bp", PredictionMode::BP});
    if (modes.empty()) throw ConfigError("unknown --pred '" + o.pred + "' (expected ff, bp or both)");

    fs::create_directories(o.out);
    std::ofstream os(fs::path(o.out) / "accuracy.csv");
    os << "mode,test_acc\n";
    std::cout << "mode,test_acc\n";
    for (const auto& [name, mode] : modes) {
        const double acc = accuracy(predict(model, X, mode, o.ff_include_first), data.test.y);
        os << name << "," << acc << "\n";
        std::cout << name << "," << acc << "\n";
    }
    write_evaluation_csv(fs::path(o.out) / "predictions.csv", model, data.test);
    return kOk;
}

template <class T>
int profile(const Options& o, const TrainConfig& cfg) {
    const fs::path out = o.out;
    std::ostringstream summary;
    bool did = false;
    if (o.params) {
        const auto model =
            make_model<T>({cfg.algorithm, o.input_dim, parse_widths(o.arch), o.classes, cfg.bias, cfg.seed});
        summary << to_string(cfg.algorithm) << " ff-pred parameters: "
                << with_commas(count_parameters(model, PredictionMode::FF)) << "\n"
                << to_string(cfg.algorithm) << " bp-pred parameters: "
                << with_commas(count_parameters(model, PredictionMode::BP)) << "\n";
        did = true;
    }
    if (!o.mem_depths.empty() || o.trace || o.timing) {
        const auto data = load_data(o);
        if (!o.mem_depths.empty()) {
            TrainConfig c = cfg;
            c.persist_dir.clear();
            MemoryVsDepth all;
            for (Algorithm a : {Algorithm::BP, Algorithm::MF}) {
                const auto r = memory_vs_depth<T>(a, o.mem_depths, o.width, data.train, c);
                write_memory_plot(out / ("memory_" + std::string(to_string(a)) + ".dat"), r);
                all.profiles.insert(all.profiles.end(), r.profiles.begin(), r.profiles.end());
                const auto model = a == Algorithm::BP
                                       ? analytic_bp_slope(std::min(c.batch_size, data.train.size()), o.width,
                                                           sizeof(T), c.optimizer)
                                       : analytic_mf_slope(o.width, data.train.classes, sizeof(T), c.optimizer);
                summary << to_string(a) << " slope: "
                        << (r.slope ? std::to_string(static_cast<long long>(*r.slope)) : std::string("n/a"))
                        << " bytes/layer (analytic " << model << ")\n";
            }
            if (!cfg.persist_dir.empty()) {
                const auto r = memory_vs_depth<T>(Algorithm::MF, o.mem_depths, o.width, data.train, cfg);
                write_memory_plot(out / "memory_mf_persist.dat", r);
                summary << "mf persist slope: "
                        << (r.slope ? std::to_string(static_cast<long long>(*r.slope)) : std::string("n/a"))
                        << " bytes/layer\n";
            }
            write_memory_csv(out / "memory.csv", all);
        }
        if (o.trace) {
            auto model = make_model<T>({cfg.algorithm, data.train.features(), parse_widths(o.arch),
                                        data.train.classes, cfg.bias, cfg.seed});
            TrainConfig c = cfg;
            c.epochs = 1;
            const auto t = memory_trace(model, data.train, c);
            write_trace_plot(out / ("trace_" + std::string(to_string(cfg.algorithm)) + ".dat"), t);
            summary << to_string(cfg.algorithm) << " trace: peak " << t.peak << " valley " << t.valley
                    << " peak/valley " << t.peak_to_valley << "\n";
        }
        if (o.timing) {
            const auto t = epoch_time_ratio<T>(data.train, parse_widths(o.arch), cfg, std::max<std::size_t>(o.epochs, 5));
            summary << "median epoch seconds: bp " << t.bp_median << " mf-pipelined " << t.mf_median
                    << " mf-sequential " << t.mf_sequential_median << "\n"
                    << "speed ratio bp/mf: " << t.ratio << " (sequential " << t.sequential_ratio << ")\n";
        }
        did = true;
    }
    if (!did) throw ConfigError("profile needs --params, --mem-vs-depth, --trace or --timing");
    std::ofstream(out / "summary.txt") << summary.str();
    std::cout << summary.str();
    return kOk;
}

template <class T>
int report(const Options& o) {
    if (o.model.empty()) throw ConfigError("report needs --model");
    const auto model = load_model<T>(o.model);
    const auto data = load_data(o);
    const auto rows = per_layer_report(model, data.test);
    write_per_layer_csv(fs::path(o.out) / "per_layer.csv", rows);
    std::cout << "layer_index,test_acc\n";
    for (const auto& r : rows) std::cout << r.layer_index << "," << r.accuracy << "\n";
    return kOk;
}

template <class T>
int run(const std::string& sub, const Options& o, const TrainConfig& cfg) {
    if (sub == "train") return train<T>(o, cfg);
    if (sub == "eval") return eval<T>(o);
    if (sub == "profile") return profile<T>(o, cfg);
    return report<T>(o);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Layerwise Mono-Forward training with BP, FF, FA and DFA baselines"};
    app.set_config("--config", "", "key=value file with option defaults");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1, 1);
    app.fallthrough();

    Options o;
    auto* g = app.add_option_group("training");
    g->add_option("--algo", o.algo, "mf, bp, ff, fa or dfa")->capture_default_str();
    g->add_option("--arch", o.arch, "hidden widths, e.g. 1000,1000, or conv:64,128,256,512")->capture_default_str();
    g->add_option("--epochs", o.epochs)->capture_default_str();
    g->add_option("--batch", o.batch, "mini-batch size")->capture_default_str();
    g->add_option("--lr", o.lr, "learning rate")->capture_default_str();
    auto* theta = g->add_option("--theta", o.theta, "FF goodness threshold (ff only)")->capture_default_str();
    g->add_option("--seed", o.seed)->capture_default_str();
    g->add_flag("--bias", o.bias, "add a bias to every dense layer");
    g->add_option("--optimizer", o.optimizer, "adam or sgd")->capture_default_str();
    g->add_option("--precision", o.precision, "single or double")
        ->check(CLI::IsMember({"single", "double"}))
        ->capture_default_str();
    g->add_flag("--pipeline", o.pipeline, "mf: one thread per layer");
    g->add_option("--stage-capacity", o.stage_capacity, "batches buffered between pipeline stages")
        ->capture_default_str();
    g->add_option("--persist-dir", o.persist_dir, "mf: keep idle layers on disk here");
    g->add_flag("--ff-include-first", o.ff_include_first, "ff: count layer 1 goodness at prediction");

    auto* d = app.add_option_group("data and outputs");
    d->add_option("--dataset", o.dataset, "mnist, mnist10k, fashion-mnist, cifar10 or blobs")->capture_default_str();
    d->add_option("--data-dir", o.data_dir, "dataset root (default: $DATA_DIR, else ./data)");
    d->add_option("--train-limit", o.train_limit, "use only the first N training samples");
    d->add_option("--test-limit", o.test_limit, "use only the first N test samples");
    d->add_option("--out", o.out, "output directory")->capture_default_str();
    d->add_option("--model", o.model, "checkpoint for eval and report");
    d->add_option("--pred", o.pred, "prediction mode for eval: ff, bp or both")->capture_default_str();

    auto* p = app.add_option_group("profiling");
    p->add_flag("--params", o.params, "print parameter counts for both prediction modes");
    p->add_option("--mem-vs-depth", o.mem_depths, "depths for the peak-memory sweep")->delimiter(',');
    p->add_option("--width", o.width, "layer width for the memory sweep")->capture_default_str();
    p->add_flag("--trace", o.trace, "record live bytes over one epoch");
    p->add_flag("--timing", o.timing, "median epoch times of bp and mf");
    p->add_option("--input-dim", o.input_dim, "input size for --params")->capture_default_str();
    p->add_option("--classes", o.classes, "class count for --params")->capture_default_str();
    p->add_flag("--per-layer", o.per_layer, "report: accuracy from each layer's goodness");

    for (auto [name, what] : {std::pair{"train", "train a model; writes report.csv and model.ckpt"},
                              std::pair{"eval", "test accuracy of a checkpoint per prediction mode"},
                              std::pair{"profile", "parameter counts, memory sweeps, traces and timings"},
                              std::pair{"report", "per-layer accuracy of an mf checkpoint"}})
        app.add_subcommand(name, what)->footer("Options are shared by all subcommands; see mfnet --help.");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }
    const std::string sub = app.get_subcommands().front()->get_name();

    try {
        const TrainConfig cfg = train_config(o);
        if (theta->count() > 0 && cfg.algorithm != Algorithm::FF)
            std::cerr << "warning: --theta only applies to ff; ignored\n";
        write_snapshot(app, sub, o.out);
        return cfg.precision == Precision::Double ? run<double>(sub, o, cfg) : run<float>(sub, o, cfg);
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kCheckpoint;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumeric;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    } catch (const LabelError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfig;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
