#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "monoforward/trainers.hpp"

namespace mono {

/// A pipeline stage failed; the epoch was abandoned.
class PipelineError : public std::runtime_error {
public:
    PipelineError(const std::string& what, std::size_t stage, std::size_t batch)
        : std::runtime_error(what), stage_(stage), batch_(batch) {}
    std::size_t stage() const noexcept { return stage_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t stage_;
    std::size_t batch_;
};

template <class T>
struct StageMessage {
    std::size_t batch_id = 0;
    DenseMatrix<T> activations;
    std::vector<Label> labels;
    DenseMatrix<T> goodness_sum;  // running sum of the upstream layers' goodness
};

/// Bounded FIFO between two stages. push blocks while full, pop blocks while
/// empty; after close() pop drains what is left and then returns nothing.
template <class T>
class StageMailbox {
public:
    explicit StageMailbox(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw ConfigError("stage capacity must be at least 1");
    }

    /// Returns false if the mailbox was aborted.
    bool push(StageMessage<T> msg) {
        std::unique_lock lock(mu_);
        if (last_id_ && msg.batch_id <= *last_id_)
            throw std::logic_error("batch ids must increase: " + std::to_string(msg.batch_id) + " after " +
                                   std::to_string(*last_id_));
        not_full_.wait(lock, [&] { return aborted_ || queue_.size() < capacity_; });
        if (aborted_) return false;
        last_id_ = msg.batch_id;
        queue_.push_back(std::move(msg));
        not_empty_.notify_one();
        return true;
    }

    std::optional<StageMessage<T>> pop() {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return aborted_ || closed_ || !queue_.empty(); });
        if (aborted_ || queue_.empty()) return std::nullopt;
        StageMessage<T> msg = std::move(queue_.front());
        queue_.pop_front();
        not_full_.notify_one();
        return msg;
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        not_empty_.notify_all();
    }

    void abort() {
        std::lock_guard lock(mu_);
        aborted_ = true;
        queue_.clear();
        not_empty_.notify_all();
        not_full_.notify_all();
    }

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t size() const {
        std::lock_guard lock(mu_);
        return queue_.size();
    }

private:
    std::size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable not_full_;
    std::condition_variable not_empty_;
    std::deque<StageMessage<T>> queue_;
    std::optional<std::size_t> last_id_;
    bool closed_ = false;
    bool aborted_ = false;
};

/// MF batches of one epoch with one thread per layer. Every stage runs the
/// same per-layer step as the sequential trainer on the same batch sequence,
/// so parameters and statistics come out bit-identical.
template <class T>
EpochTotals pipelined_batches(Model<T>& model, const Dataset& train, std::span<const std::size_t> order,
                              const TrainConfig& cfg, std::size_t epoch);

/// One pipelined epoch (the epoch-1 batch order) through train_epochs.
template <class T>
RunReport pipelined_train_epoch(Model<T>& model, const Dataset& train, const TrainConfig& cfg,
                                std::size_t stage_capacity);

struct DamageReport {
    double before_ff = 0, before_bp = 0;    // intact model
    double damaged_ff = 0, damaged_bp = 0;  // layer re-randomized
    double after_ff = 0, after_bp = 0;      // layer retrained
};

/// Re-randomizes one layer (1-based) of a trained MF model, measures both
/// prediction modes, then retrains that layer alone for cfg.epochs epochs with
/// its predecessors frozen and its successors untouched.
template <class T>
DamageReport damage_and_retrain(Model<T>& model, std::size_t layer_index, const Dataset& train, const Dataset& test,
                                const TrainConfig& cfg);

}  // namespace mono
