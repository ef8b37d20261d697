#include "monoforward/tracker.hpp"

namespace mono {

AllocationTracker& AllocationTracker::instance() {
    static AllocationTracker tracker;
    return tracker;
}

void AllocationTracker::on_alloc(std::size_t bytes) noexcept {
    const auto live = live_.fetch_add(static_cast<std::int64_t>(bytes), std::memory_order_relaxed) +
                      static_cast<std::int64_t>(bytes);
    auto peak = peak_.load(std::memory_order_relaxed);
    while (live > peak && !peak_.compare_exchange_weak(peak, live, std::memory_order_relaxed)) {
    }
    if (logging_.load(std::memory_order_relaxed)) record(live);
}

void AllocationTracker::on_free(std::size_t bytes) noexcept {
    const auto live = live_.fetch_sub(static_cast<std::int64_t>(bytes), std::memory_order_relaxed) -
                      static_cast<std::int64_t>(bytes);
    if (logging_.load(std::memory_order_relaxed)) record(live);
}

void AllocationTracker::reset_peak() noexcept {
    peak_.store(live_.load(std::memory_order_relaxed), std::memory_order_relaxed);
}

void AllocationTracker::enable_event_log(bool on) {
    std::lock_guard lock(log_mutex_);
    if (on) {
        log_.clear();
        log_start_ = std::chrono::steady_clock::now();
        log_.push_back({0.0, live_.load(std::memory_order_relaxed)});
    }
    logging_.store(on, std::memory_order_relaxed);
}

std::vector<AllocationTracker::Event> AllocationTracker::take_event_log() {
    std::lock_guard lock(log_mutex_);
    std::vector<Event> out;
    out.swap(log_);
    return out;
}

void AllocationTracker::record(std::int64_t live) noexcept {
    try {
        std::lock_guard lock(log_mutex_);
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - log_start_;
        log_.push_back({dt.count(), live});
    } catch (...) {
        // the log is best effort; counters above are already updated
    }
}

}  // namespace mono
