#pragma once

#include <chrono>
#include <mutex>

namespace personadb {

/// Token bucket over requests per minute. A rate of zero disables limiting.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_minute = 0.0, double burst = 1.0);

  void acquire();
  bool try_acquire();
  double requests_per_minute() const noexcept { return rate_per_min_; }

 private:
  void refill(std::chrono::steady_clock::time_point now);

  double rate_per_min_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mutex_;
};

}  // namespace personadb
