#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

namespace mono {

/// Process-global monitor of live matrix payload bytes.
///
/// Only element storage of DenseMatrix is counted (rows * cols * element
/// size). Headers, std::vector scratch inside kernels and label vectors are
/// not tracked, so depth-scaling measurements depend only on which matrices
/// an algorithm keeps alive.
class AllocationTracker {
public:
    struct Event {
        double seconds;        // since the log was enabled
        std::int64_t live_bytes;
    };

    static AllocationTracker& instance();

    void on_alloc(std::size_t bytes) noexcept;
    void on_free(std::size_t bytes) noexcept;

    std::int64_t live_bytes() const noexcept { return live_.load(std::memory_order_relaxed); }
    std::int64_t peak_bytes() const noexcept { return peak_.load(std::memory_order_relaxed); }

    // Peak restarts from the current live byte count.
    void reset_peak() noexcept;

    void enable_event_log(bool on);
    bool event_log_enabled() const noexcept { return logging_.load(std::memory_order_relaxed); }
    std::vector<Event> take_event_log();

private:
    AllocationTracker() = default;
    void record(std::int64_t live) noexcept;

    std::atomic<std::int64_t> live_{0};
    std::atomic<std::int64_t> peak_{0};
    std::atomic<bool> logging_{false};
    std::mutex log_mutex_;
    std::vector<Event> log_;
    std::chrono::steady_clock::time_point log_start_{};
};

inline std::int64_t tracker_peak() { return AllocationTracker::instance().peak_bytes(); }
inline std::int64_t tracker_live() { return AllocationTracker::instance().live_bytes(); }
inline void tracker_reset() { AllocationTracker::instance().reset_peak(); }

/// Allocator used by DenseMatrix storage; reports every payload to the tracker.
template <class T>
struct TrackedAllocator {
    using value_type = T;

    TrackedAllocator() noexcept = default;
    template <class U>
    TrackedAllocator(const TrackedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) {
        T* p = std::allocator<T>{}.allocate(n);
        AllocationTracker::instance().on_alloc(n * sizeof(T));
        return p;
    }
    void deallocate(T* p, std::size_t n) noexcept {
        AllocationTracker::instance().on_free(n * sizeof(T));
        std::allocator<T>{}.deallocate(p, n);
    }

    template <class U>
    bool operator==(const TrackedAllocator<U>&) const noexcept { return true; }
};

}  // namespace mono
