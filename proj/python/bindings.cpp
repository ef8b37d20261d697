#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>

#include "monoforward/data.hpp"
#include "monoforward/errors.hpp"
#include "monoforward/predict.hpp"
#include "monoforward/profiling.hpp"
#include "monoforward/trainers.hpp"

namespace py = pybind11;
using namespace mono;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

MatrixF to_matrix(const FloatArray& x) {
    if (x.ndim() != 2) throw ShapeError("expected a 2-d array of samples x features");
    MatrixF m(static_cast<std::size_t>(x.shape(0)), static_cast<std::size_t>(x.shape(1)));
    std::copy(x.data(), x.data() + x.size(), m.data());
    return m;
}

std::vector<Label> to_labels(const LabelArray& y) {
    if (y.ndim() != 1) throw ShapeError("expected a 1-d label array");
    std::vector<Label> out(static_cast<std::size_t>(y.size()));
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (y.data()[i] < 0) throw LabelError("negative label");
        out[i] = static_cast<Label>(y.data()[i]);
    }
    return out;
}

Dataset to_dataset(const FloatArray& x, const LabelArray& y, std::size_t classes) {
    Dataset ds;
    ds.X = to_matrix(x);
    ds.y = to_labels(y);
    ds.classes = classes;
    if (ds.X.rows() != ds.y.size()) throw ShapeError("X and y disagree on the number of samples");
    return ds;
}

py::array_t<float> to_numpy(const MatrixF& m) {
    py::array_t<float> out({m.rows(), m.cols()});
    std::copy(m.data(), m.data() + m.size(), out.mutable_data());
    return out;
}

py::array_t<std::int64_t> to_numpy(const std::vector<Label>& y) {
    py::array_t<std::int64_t> out(static_cast<py::ssize_t>(y.size()));
    std::copy(y.begin(), y.end(), out.mutable_data());
    return out;
}

py::tuple dataset_tuple(const Dataset& ds) { return py::make_tuple(to_numpy(ds.X), to_numpy(ds.y)); }

PredictionMode parse_mode(const std::string& s) {
    if (s == "ff") return PredictionMode::FF;
    if (s == "bp") return PredictionMode::BP;
    throw ConfigError("prediction mode must be 'ff' or 'bp', got '" + s + "'");
}

py::list report_rows(const RunReport& r) {
    py::list rows;
    for (const auto& row : r.rows) {
        py::dict d;
        d["epoch"] = row.epoch;
        d["layer_index"] = row.layer_index;
        d["train_loss"] = row.train_loss;
        d["train_acc"] = row.train_acc;
        d["test_acc"] = row.test_acc;
        d["peak_bytes"] = row.peak_bytes;
        d["epoch_seconds"] = row.epoch_seconds;
        rows.append(d);
    }
    return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Layerwise Mono-Forward training with BP, FF, FA and DFA baselines";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<LabelError>(m, "LabelError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<DataError>(m, "DataError", PyExc_OSError);
    py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_OSError);

    py::class_<Model<float>>(m, "Model")
        .def(py::init([](const std::string& algorithm, std::size_t input_dim, std::vector<std::size_t> widths,
                         std::size_t classes, bool bias, std::uint64_t seed) {
                 return make_model<float>({parse_algorithm(algorithm), input_dim, std::move(widths), classes, bias,
                                           seed});
             }),
             py::arg("algorithm"), py::arg("input_dim"), py::arg("widths"), py::arg("classes"), py::arg("bias") = false,
             py::arg("seed") = 0)
        .def_property_readonly("algorithm", [](const Model<float>& md) { return std::string(to_string(md.algorithm)); })
        .def_property_readonly("depth", &Model<float>::depth)
        .def_property_readonly("widths", &Model<float>::widths)
        .def_property_readonly("classes", [](const Model<float>& md) { return md.classes; })
        .def_property_readonly("input_dim", [](const Model<float>& md) { return md.input_dim; })
        .def(
            "count_parameters",
            [](const Model<float>& md, const std::string& mode) { return count_parameters(md, parse_mode(mode)); },
            py::arg("mode") = "ff")
        .def(
            "train",
            [](Model<float>& md, const FloatArray& x, const LabelArray& y, std::size_t epochs, std::size_t batch_size,
               double lr, std::uint64_t seed, double theta, const std::string& optimizer, bool pipeline,
               std::size_t stage_capacity, std::optional<FloatArray> x_test, std::optional<LabelArray> y_test) {
                TrainConfig cfg;
                cfg.algorithm = md.algorithm;
                cfg.epochs = epochs;
                cfg.batch_size = batch_size;
                cfg.lr = lr;
                cfg.seed = seed;
                cfg.theta = theta;
                if (optimizer == "sgd")
                    cfg.optimizer = OptimizerKind::Sgd;
                else if (optimizer != "adam")
                    throw ConfigError("optimizer must be 'adam' or 'sgd'");
                cfg.pipeline = pipeline;
                cfg.stage_capacity = stage_capacity;
                const Dataset train = to_dataset(x, y, md.classes);
                std::optional<Dataset> test;
                if (x_test && y_test) test = to_dataset(*x_test, *y_test, md.classes);
                RunReport r;
                {
                    py::gil_scoped_release release;
                    r = train_epochs(md, train, test ? &*test : nullptr, cfg);
                }
                return report_rows(r);
            },
            py::arg("X"), py::arg("y"), py::arg("epochs") = 1, py::arg("batch_size") = 64, py::arg("lr") = 0.001,
            py::arg("seed") = 0, py::arg("theta") = 2.0, py::arg("optimizer") = "adam", py::arg("pipeline") = false,
            py::arg("stage_capacity") = 2, py::arg("X_test") = py::none(), py::arg("y_test") = py::none(),
            "Train in place; returns one dict per report row.")
        .def(
            "predict",
            [](const Model<float>& md, const FloatArray& x, const std::string& mode) {
                return to_numpy(predict(md, to_matrix(x), parse_mode(mode)));
            },
            py::arg("X"), py::arg("mode") = "ff")
        .def(
            "per_layer_predict",
            [](const Model<float>& md, const FloatArray& x) {
                py::list out;
                for (const auto& p : per_layer_predict(md, to_matrix(x))) out.append(to_numpy(p));
                return out;
            },
            py::arg("X"))
        .def("weights", [](const Model<float>& md, std::size_t i) { return to_numpy(md.layers.at(i).W); })
        .def("projection", [](const Model<float>& md, std::size_t i) { return to_numpy(md.layers.at(i).M); })
        .def("save", [](const Model<float>& md, const std::filesystem::path& p) { save_model(md, p); })
        .def_static("load", [](const std::filesystem::path& p) { return load_model<float>(p); });

    m.def(
        "accuracy",
        [](const LabelArray& pred, const LabelArray& truth) { return accuracy(to_labels(pred), to_labels(truth)); },
        py::arg("predicted"), py::arg("truth"));
    m.def(
        "synth_blobs",
        [](std::size_t classes, std::size_t features, std::size_t per_class, double separation, std::uint64_t seed) {
            return dataset_tuple(synth_blobs(classes, features, per_class, separation, seed));
        },
        py::arg("classes"), py::arg("features"), py::arg("per_class"), py::arg("separation") = 6.0,
        py::arg("seed") = 0);
    m.def(
        "load_dataset",
        [](const std::string& name, const std::optional<std::filesystem::path>& dir, std::uint64_t seed) {
            const auto s = load_named(name, dir ? *dir : data_dir(), seed);
            return py::make_tuple(dataset_tuple(s.train), dataset_tuple(s.test));
        },
        py::arg("name"), py::arg("data_dir") = py::none(), py::arg("seed") = 0,
        "((X_train, y_train), (X_test, y_test)) for mnist, mnist10k, fashion-mnist, cifar10 or blobs.");
    m.def(
        "memory_vs_depth",
        [](const std::string& algorithm, const std::vector<std::size_t>& depths, std::size_t width,
           const FloatArray& x, const LabelArray& y, std::size_t classes, std::size_t batch_size) {
            TrainConfig cfg;
            cfg.batch_size = batch_size;
            const auto r = memory_vs_depth<float>(parse_algorithm(algorithm), depths, width,
                                                  to_dataset(x, y, classes), cfg);
            py::dict out;
            py::list peaks;
            for (const auto& p : r.profiles) peaks.append(p.peak_bytes);
            out["depths"] = depths;
            out["peak_bytes"] = peaks;
            out["slope"] = r.slope ? py::cast(*r.slope) : py::none();
            return out;
        },
        py::arg("algorithm"), py::arg("depths"), py::arg("width"), py::arg("X"), py::arg("y"), py::arg("classes"),
        py::arg("batch_size") = 64);
    m.def("forward_pass_count", &forward_pass_count);
    m.def("reset_forward_pass_count", &reset_forward_pass_count);
}
