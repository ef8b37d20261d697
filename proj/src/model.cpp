#include "monoforward/model.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "monoforward/checkpoint.hpp"
#include "monoforward/rng.hpp"

namespace mono {

std::string_view to_string(Algorithm a) {
    switch (a) {
        case Algorithm::MF: return "mf";
        case Algorithm::BP: return "bp";
        case Algorithm::FF: return "ff";
        case Algorithm::FA: return "fa";
        case Algorithm::DFA: return "dfa";
    }
    return "?";
}

Algorithm parse_algorithm(std::string_view s) {
    for (auto a : {Algorithm::MF, Algorithm::BP, Algorithm::FF, Algorithm::FA, Algorithm::DFA})
        if (to_string(a) == s) return a;
    throw ConfigError("unknown algorithm '" + std::string(s) + "' (expected mf, bp, ff, fa or dfa)");
}

template <class T>
std::vector<std::size_t> Model<T>::widths() const {
    std::vector<std::size_t> w;
    for (const auto& l : layers) w.push_back(l.fan_out());
    return w;
}

template <class T>
void Model<T>::allocate_optimizer_state(OptimizerKind kind) {
    for (auto& l : layers) l.allocate_optimizer_state(kind);
}

template <class T>
std::vector<DenseMatrix<T>> make_feedback(const Model<T>& model) {
    std::vector<DenseMatrix<T>> fb;
    const std::size_t L = model.depth();
    for (std::size_t i = 0; i < L; ++i) {
        auto gen = make_stream(model.seed, static_cast<std::uint32_t>(i), StreamRole::Feedback);
        const std::size_t n = model.layers[i].fan_out();
        DenseMatrix<T> B;
        double bound;
        if (model.algorithm == Algorithm::DFA || i + 1 == L) {
            B = DenseMatrix<T>(model.classes, n);
            bound = 1.0 / std::sqrt(static_cast<double>(n));
        } else {
            B = DenseMatrix<T>(model.layers[i + 1].fan_out(), n);
            bound = std::sqrt(6.0 / static_cast<double>(n));
        }
        for (auto& v : B.values()) v = uniform<T>(gen, T(-bound), T(bound));
        fb.push_back(std::move(B));
    }
    return fb;
}

template <class T>
Model<T> make_model(const ModelSpec& spec) {
    if (spec.widths.empty()) throw ConfigError("model needs at least one layer");
    if (spec.input_dim == 0) throw ConfigError("model input dimension is zero");
    if (spec.classes == 0) throw ConfigError("model needs at least one class");
    Model<T> m;
    m.algorithm = spec.algorithm;
    m.input_dim = spec.input_dim;
    m.classes = spec.classes;
    m.seed = spec.seed;
    std::size_t fan_in = spec.input_dim;
    for (std::size_t i = 0; i < spec.widths.size(); ++i) {
        const bool last = i + 1 == spec.widths.size();
        LayerInit li;
        li.fan_in = fan_in;
        li.fan_out = spec.widths[i];
        li.classes = spec.classes;
        li.bias = spec.bias;
        li.projection = spec.algorithm == Algorithm::MF || (last && spec.algorithm != Algorithm::FF);
        m.layers.push_back(init_dense_layer<T>(li, spec.seed, static_cast<std::uint32_t>(i)));
        fan_in = spec.widths[i];
    }
    if (spec.algorithm == Algorithm::FA || spec.algorithm == Algorithm::DFA) m.feedback = make_feedback(m);
    return m;
}

template <class T>
std::size_t count_parameters(const Model<T>& model, PredictionMode mode) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < model.depth(); ++i) {
        const bool last = i + 1 == model.depth();
        n += model.layers[i].parameter_count(mode == PredictionMode::FF || last);
    }
    return n;
}

template <class T>
void save_model(const Model<T>& model, const std::filesystem::path& path) {
    std::ostringstream meta;
    meta << "algorithm=" << to_string(model.algorithm) << "\ninput_dim=" << model.input_dim
         << "\nclasses=" << model.classes << "\nseed=" << model.seed << "\ndepth=" << model.depth()
         << "\nbias=" << (model.depth() && model.layers[0].has_bias() ? 1 : 0) << "\n";
    std::vector<TensorRecord> t;
    t.push_back(TensorRecord::from_text("meta", meta.str()));
    for (std::size_t i = 0; i < model.depth(); ++i) {
        const auto& l = model.layers[i];
        const std::string p = "layer" + std::to_string(i) + ".";
        t.push_back(TensorRecord::from_matrix(p + "W", l.W));
        if (l.b) t.push_back(TensorRecord::from_matrix(p + "b", *l.b));
        if (l.has_projection()) t.push_back(TensorRecord::from_matrix(p + "M", l.M));
    }
    for (std::size_t i = 0; i < model.feedback.size(); ++i)
        t.push_back(TensorRecord::from_matrix("feedback" + std::to_string(i), model.feedback[i]));
    write_container(path, t);
}

template <class T>
Model<T> load_model(const std::filesystem::path& path) {
    const auto t = read_container(path);
    std::map<std::string, std::string> kv;
    {
        std::istringstream is(find_tensor(t, "meta").to_text());
        std::string line;
        while (std::getline(is, line)) {
            const auto eq = line.find('=');
            if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
        }
    }
    auto need = [&](const std::string& k) -> const std::string& {
        auto it = kv.find(k);
        if (it == kv.end()) throw CheckpointError("checkpoint metadata lacks '" + k + "'");
        return it->second;
    };
    Model<T> m;
    std::size_t depth = 0;
    try {
        m.algorithm = parse_algorithm(need("algorithm"));
        m.input_dim = std::stoull(need("input_dim"));
        m.classes = std::stoull(need("classes"));
        m.seed = std::stoull(need("seed"));
        depth = std::stoull(need("depth"));
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("bad checkpoint metadata: ") + e.what());
    }
    std::size_t fan_in = m.input_dim;
    for (std::size_t i = 0; i < depth; ++i) {
        const std::string p = "layer" + std::to_string(i) + ".";
        LayerParams<T> l;
        l.W = find_tensor(t, p + "W").template to_matrix<T>();
        if (l.W.rows() != fan_in) throw CheckpointError("layer " + std::to_string(i) + " has inconsistent fan-in");
        if (const auto* b = find_tensor_opt(t, p + "b")) {
            l.b = b->template to_matrix<T>();
            if (l.b->cols() != l.W.cols() || l.b->rows() != 1)
                throw CheckpointError("layer " + std::to_string(i) + " bias shape mismatch");
        }
        if (const auto* M = find_tensor_opt(t, p + "M")) {
            l.M = M->template to_matrix<T>();
            if (l.M.cols() != l.W.cols() || l.M.rows() != m.classes)
                throw CheckpointError("layer " + std::to_string(i) + " projection shape mismatch");
        }
        fan_in = l.W.cols();
        m.layers.push_back(std::move(l));
    }
    if (m.layers.empty()) throw CheckpointError("checkpoint holds no layers");
    if (m.algorithm != Algorithm::FF && !m.layers.back().has_projection())
        throw CheckpointError("checkpoint lacks the output projection");
    for (std::size_t i = 0;; ++i) {
        const auto* f = find_tensor_opt(t, "feedback" + std::to_string(i));
        if (!f) break;
        m.feedback.push_back(f->template to_matrix<T>());
    }
    if ((m.algorithm == Algorithm::FA || m.algorithm == Algorithm::DFA) && m.feedback.size() != depth)
        throw CheckpointError("checkpoint lacks feedback matrices");
    return m;
}

template <class T>
ConvModel<T> make_conv_model(ImageShape input, const std::vector<std::size_t>& channels, std::size_t classes,
                             std::uint64_t seed) {
    if (channels.empty()) throw ConfigError("conv model needs at least one block");
    ConvModel<T> m;
    m.classes = classes;
    m.seed = seed;
    ImageShape s = input;
    for (std::size_t i = 0; i < channels.size(); ++i) {
        m.blocks.push_back(init_conv_layer<T>(s, channels[i], classes, seed, static_cast<std::uint32_t>(i)));
        s = m.blocks.back().pooled_shape();
    }
    return m;
}

template <class T>
std::size_t count_parameters(const ConvModel<T>& model, PredictionMode mode) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < model.depth(); ++i)
        n += model.blocks[i].parameter_count(mode == PredictionMode::FF || i + 1 == model.depth());
    return n;
}

#define MONO_INSTANTIATE(T)                                                                                   \
    template struct Model<T>;                                                                                 \
    template Model<T> make_model<T>(const ModelSpec&);                                                        \
    template std::size_t count_parameters(const Model<T>&, PredictionMode);                                   \
    template std::vector<DenseMatrix<T>> make_feedback(const Model<T>&);                                      \
    template void save_model(const Model<T>&, const std::filesystem::path&);                                  \
    template Model<T> load_model<T>(const std::filesystem::path&);                                            \
    template ConvModel<T> make_conv_model<T>(ImageShape, const std::vector<std::size_t>&, std::size_t,        \
                                             std::uint64_t);                                                  \
    template std::size_t count_parameters(const ConvModel<T>&, PredictionMode);

MONO_INSTANTIATE(float)
MONO_INSTANTIATE(double)

}  // namespace mono
