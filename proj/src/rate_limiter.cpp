#include "personadb/rate_limiter.hpp"

#include <algorithm>
#include <thread>

namespace personadb {

RateLimiter::RateLimiter(double requests_per_minute, double burst)
    : rate_per_min_(requests_per_minute),
      capacity_(std::max(1.0, burst)),
      tokens_(std::max(1.0, burst)),
      last_(std::chrono::steady_clock::now()) {}

void RateLimiter::refill(std::chrono::steady_clock::time_point now) {
  const std::chrono::duration<double> elapsed = now - last_;
  tokens_ = std::min(capacity_, tokens_ + elapsed.count() * rate_per_min_ / 60.0);
  last_ = now;
}

bool RateLimiter::try_acquire() {
  if (rate_per_min_ <= 0.0) return true;
  std::lock_guard lock(mutex_);
  refill(std::chrono::steady_clock::now());
  if (tokens_ >= 1.0) {
    tokens_ -= 1.0;
    return true;
  }
  return false;
}

void RateLimiter::acquire() {
  if (rate_per_min_ <= 0.0) return;
  while (true) {
    std::chrono::duration<double> wait{};
    {
      std::lock_guard lock(mutex_);
      refill(std::chrono::steady_clock::now());
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::duration<double>((1.0 - tokens_) * 60.0 / rate_per_min_);
    }
    std::this_thread::sleep_for(wait);
  }
}

}  // namespace personadb
