#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <new>

namespace latentaug::tensorcore {

// Byte counters for tensor storage. The high-water mark is what the
// throughput benchmark reports as peak memory.
class MemoryStats {
 public:
  static std::int64_t current() { return current_.load(std::memory_order_relaxed); }
  static std::int64_t peak() { return peak_.load(std::memory_order_relaxed); }
  static void reset_peak() { peak_.store(current(), std::memory_order_relaxed); }

  static void on_alloc(std::size_t bytes) {
    const std::int64_t now = current_.fetch_add(static_cast<std::int64_t>(bytes), std::memory_order_relaxed) +
                             static_cast<std::int64_t>(bytes);
    std::int64_t seen = peak_.load(std::memory_order_relaxed);
    while (now > seen && !peak_.compare_exchange_weak(seen, now, std::memory_order_relaxed)) {
    }
  }
  static void on_free(std::size_t bytes) {
    current_.fetch_sub(static_cast<std::int64_t>(bytes), std::memory_order_relaxed);
  }

 private:
  static inline std::atomic<std::int64_t> current_{0};
  static inline std::atomic<std::int64_t> peak_{0};
};

template <class T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() noexcept = default;
  template <class U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    T* p = std::allocator<T>{}.allocate(n);
    MemoryStats::on_alloc(n * sizeof(T));
    return p;
  }
  void deallocate(T* p, std::size_t n) noexcept {
    MemoryStats::on_free(n * sizeof(T));
    std::allocator<T>{}.deallocate(p, n);
  }

  template <class U>
  bool operator==(const TrackingAllocator<U>&) const noexcept {
    return true;
  }
};

}  // namespace latentaug::tensorcore
