#include "monoforward/pipeline.hpp"

#include <exception>
#include <memory>
#include <numeric>
#include <thread>

#include "monoforward/ops.hpp"
#include "monoforward/predict.hpp"
#include "monoforward/rng.hpp"

namespace mono {
namespace {

struct StageLog {
    std::vector<double> loss;
    std::vector<std::size_t> correct;
};

struct Failure {
    std::mutex mu;
    bool set = false;
    std::size_t stage = 0;
    std::size_t batch = 0;
    std::exception_ptr error;

    void record(std::size_t s, std::size_t b, std::exception_ptr e) {
        std::lock_guard lock(mu);
        if (set) return;
        set = true;
        stage = s;
        batch = b;
        error = std::move(e);
    }
};

std::size_t count_hits(const std::vector<Label>& pred, std::span<const Label> y) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < y.size(); ++i) hits += pred[i] == y[i];
    return hits;
}

[[noreturn]] void rethrow_failure(const Failure& f, std::size_t epoch) {
    const std::string where = "epoch " + std::to_string(epoch) + ", stage " + std::to_string(f.stage + 1) +
                              ", batch " + std::to_string(f.batch) + ": ";
    try {
        std::rethrow_exception(f.error);
    } catch (const NumericError& e) {
        throw NumericError(where + e.what(), e.layer());
    } catch (const std::exception& e) {
        throw PipelineError(where + e.what(), f.stage, f.batch);
    }
}

}  // namespace

template <class T>
EpochTotals pipelined_batches(Model<T>& model, const Dataset& train, std::span<const std::size_t> order,
                              const TrainConfig& cfg, std::size_t epoch) {
    const std::size_t L = model.depth();
    const std::size_t n = order.size();
    const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
    EpochTotals totals;
    if (L == 0 || batches == 0) return totals;

    std::vector<std::unique_ptr<StageMailbox<T>>> inbox;
    for (std::size_t i = 0; i < L; ++i) inbox.push_back(std::make_unique<StageMailbox<T>>(cfg.stage_capacity));
    std::vector<StageLog> logs(L);
    std::vector<std::size_t> aggregate(batches, 0);
    Failure failure;
    auto abort_all = [&] {
        for (auto& m : inbox) m->abort();
    };

    auto stage = [&](std::size_t i) {
        auto& layer = model.layers[i];
        std::size_t current = 0;
        try {
            while (auto msg = inbox[i]->pop()) {
                current = msg->batch_id;
                auto r = mf_layer_step(layer, msg->activations, msg->labels, cfg, static_cast<int>(i + 1));
                logs[i].loss.push_back(r.loss);
                logs[i].correct.push_back(count_hits(argmax_rows(r.goodness), msg->labels));
                axpy(T{1}, r.goodness, msg->goodness_sum);
                if (i + 1 == L) {
                    aggregate[msg->batch_id] = count_hits(argmax_rows(msg->goodness_sum), msg->labels);
                    continue;
                }
                msg->activations = std::move(r.a);
                if (!inbox[i + 1]->push(std::move(*msg))) return;
            }
            if (i + 1 < L) inbox[i + 1]->close();
        } catch (...) {
            failure.record(i, current, std::current_exception());
            abort_all();
        }
    };

    std::vector<std::thread> workers;
    workers.reserve(L);
    for (std::size_t i = 0; i < L; ++i) workers.emplace_back(stage, i);

    try {
        for (std::size_t b = 0; b < batches; ++b) {
            const auto idx = order.subspan(b * cfg.batch_size, std::min(cfg.batch_size, n - b * cfg.batch_size));
            StageMessage<T> msg;
            msg.batch_id = b;
            msg.activations = batch_rows<T>(train, idx);
            msg.labels.resize(idx.size());
            for (std::size_t k = 0; k < idx.size(); ++k) msg.labels[k] = train.y[idx[k]];
            msg.goodness_sum = DenseMatrix<T>(idx.size(), model.classes);
            if (!inbox[0]->push(std::move(msg))) break;
        }
        inbox[0]->close();
    } catch (...) {
        failure.record(0, 0, std::current_exception());
        abort_all();
    }
    for (auto& w : workers) w.join();
    if (failure.set) rethrow_failure(failure, epoch);

    for (std::size_t b = 0; b < batches; ++b) {
        BatchStats st;
        st.samples = std::min(cfg.batch_size, n - b * cfg.batch_size);
        for (std::size_t i = 0; i < L; ++i) {
            st.layer_loss.push_back(logs[i].loss[b]);
            st.layer_correct.push_back(logs[i].correct[b]);
        }
        st.aggregate_correct = aggregate[b];
        totals.add(st);
    }
    return totals;
}

template <class T>
RunReport pipelined_train_epoch(Model<T>& model, const Dataset& train, const TrainConfig& cfg,
                                std::size_t stage_capacity) {
    if (cfg.algorithm != Algorithm::MF) throw ConfigError("pipelined training is only available for mf");
    TrainConfig c = cfg;
    c.pipeline = true;
    c.stage_capacity = stage_capacity;
    c.epochs = 1;
    return train_epochs(model, train, nullptr, c);
}

template <class T>
DamageReport damage_and_retrain(Model<T>& model, std::size_t layer_index, const Dataset& train, const Dataset& test,
                                const TrainConfig& cfg) {
    if (model.algorithm != Algorithm::MF) throw ConfigError("damage_and_retrain needs an mf model");
    if (layer_index < 1 || layer_index > model.depth())
        throw ConfigError("layer " + std::to_string(layer_index) + " out of range 1.." +
                          std::to_string(model.depth()));
    cfg.validate();
    std::vector<std::size_t> rows(test.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    const auto X_test = batch_rows<T>(test, rows);
    auto measure = [&](double& ff, double& bp) {
        const auto p = mf_predict_all(model, X_test);
        ff = accuracy(p.ff, test.y);
        bp = accuracy(p.bp, test.y);
    };

    DamageReport rep;
    measure(rep.before_ff, rep.before_bp);

    const std::size_t i = layer_index - 1;
    auto& old = model.layers[i];
    auto gen = make_stream(cfg.seed, static_cast<std::uint32_t>(layer_index), StreamRole::Damage);
    LayerInit init{old.fan_in(), old.fan_out(), model.classes, old.has_bias(), true};
    old = init_dense_layer<T>(init, gen(), static_cast<std::uint32_t>(layer_index));
    old.allocate_optimizer_state(cfg.optimizer);
    measure(rep.damaged_ff, rep.damaged_bp);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto order = epoch_order(train.size(), cfg.seed, epoch);
        const std::span<const std::size_t> all(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto idx = all.subspan(start, std::min(cfg.batch_size, order.size() - start));
            DenseMatrix<T> h = batch_rows<T>(train, idx);
            std::vector<Label> y(idx.size());
            for (std::size_t k = 0; k < idx.size(); ++k) y[k] = train.y[idx[k]];
            for (std::size_t j = 0; j < i; ++j) h = dense_forward(h, model.layers[j]).a;
            mf_layer_step(model.layers[i], h, y, cfg, static_cast<int>(layer_index));
        }
    }
    measure(rep.after_ff, rep.after_bp);
    return rep;
}

#define MONO_INSTANTIATE(T)                                                                                  \
    template EpochTotals pipelined_batches(Model<T>&, const Dataset&, std::span<const std::size_t>,          \
                                           const TrainConfig&, std::size_t);                                 \
    template RunReport pipelined_train_epoch(Model<T>&, const Dataset&, const TrainConfig&, std::size_t);    \
    template DamageReport damage_and_retrain(Model<T>&, std::size_t, const Dataset&, const Dataset&,         \
                                             const TrainConfig&);

MONO_INSTANTIATE(float)
MONO_INSTANTIATE(double)

}  // namespace mono
