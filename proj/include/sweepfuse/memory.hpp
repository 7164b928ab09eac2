#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <new>
#include <vector>

namespace sweepfuse {

struct AllocationStats {
  std::size_t live_blocks = 0;
  std::size_t peak_blocks = 0;
  std::size_t live_bytes = 0;
  std::size_t peak_bytes = 0;
};

/// Process-wide counters for every buffer allocated through
/// TrackingAllocator. Used to verify that the depth sweep keeps a bounded
/// working set regardless of the number of hypotheses.
class AllocationTracker {
 public:
  static void on_allocate(std::size_t bytes) noexcept {
    const auto blocks = live_blocks_.fetch_add(1) + 1;
    const auto total = live_bytes_.fetch_add(bytes) + bytes;
    raise(peak_blocks_, blocks);
    raise(peak_bytes_, total);
  }

  static void on_deallocate(std::size_t bytes) noexcept {
    live_blocks_.fetch_sub(1);
    live_bytes_.fetch_sub(bytes);
  }

  static AllocationStats stats() noexcept {
    return {live_blocks_.load(), peak_blocks_.load(), live_bytes_.load(),
            peak_bytes_.load()};
  }

  // Resets the peaks to the current live values.
  static void reset_peak() noexcept {
    peak_blocks_.store(live_blocks_.load());
    peak_bytes_.store(live_bytes_.load());
  }

 private:
  static void raise(std::atomic<std::size_t>& peak, std::size_t value) noexcept {
    auto current = peak.load();
    while (value > current && !peak.compare_exchange_weak(current, value)) {
    }
  }

  static inline std::atomic<std::size_t> live_blocks_{0};
  static inline std::atomic<std::size_t> peak_blocks_{0};
  static inline std::atomic<std::size_t> live_bytes_{0};
  static inline std::atomic<std::size_t> peak_bytes_{0};
};

template <class T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() noexcept = default;
  template <class U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    const std::size_t bytes = n * sizeof(T);
    T* p = std::allocator<T>{}.allocate(n);
    AllocationTracker::on_allocate(bytes);
    return p;
  }

  void deallocate(T* p, std::size_t n) noexcept {
    AllocationTracker::on_deallocate(n * sizeof(T));
    std::allocator<T>{}.deallocate(p, n);
  }

  template <class U>
  bool operator==(const TrackingAllocator<U>&) const noexcept {
    return true;
  }
};

template <class T>
using tracked_vector = std::vector<T, TrackingAllocator<T>>;

}  // namespace sweepfuse
