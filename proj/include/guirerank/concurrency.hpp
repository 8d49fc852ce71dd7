#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>

namespace guirerank {

// Counting semaphore with a runtime capacity. Bounds the number of in-flight
// model requests across every caller sharing it.
class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(std::size_t capacity);

  void acquire();
  void release();
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t in_flight() const;
  // Highest in-flight count ever observed.
  std::size_t peak() const;

  class Slot {
   public:
    explicit Slot(ConcurrencyLimiter& limiter) : limiter_(&limiter) { limiter_->acquire(); }
    ~Slot() {
      if (limiter_ != nullptr) limiter_->release();
    }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    ConcurrencyLimiter* limiter_;
  };

 private:
  const std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
  std::size_t peak_ = 0;
};

// Runs body(i) for every i in [0, count) on at most `width` threads.
// Indices are handed out in increasing order. The first exception thrown by
// any body is rethrown after all workers have stopped; remaining indices are
// skipped once a body has thrown.
void parallel_for(std::size_t count, std::size_t width, const std::function<void(std::size_t)>& body);

}  // namespace guirerank
