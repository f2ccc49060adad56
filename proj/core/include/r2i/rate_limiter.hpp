#pragma once

#include <chrono>
#include <deque>
#include <memory>
#include <mutex>
#include <vector>

namespace r2i {

/// Monotonic time source in seconds. Injected so rate limiting and backoff can
/// be tested without sleeping.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() = 0;
  virtual void sleep_for(double seconds) = 0;
  virtual void sleep_until(double deadline) { sleep_for(deadline - now()); }
};

class SteadyClock final : public Clock {
 public:
  double now() override;
  void sleep_for(double seconds) override;
};

/// Sleeping advances time instantly. Thread-safe.
class FakeClock final : public Clock {
 public:
  explicit FakeClock(double start = 0.0) : now_(start) {}
  double now() override;
  void sleep_for(double seconds) override;
  void sleep_until(double deadline) override;
  /// Total time spent in sleep_for.
  double slept() const;

 private:
  mutable std::mutex mu_;
  double now_;
  double slept_ = 0.0;
};

std::shared_ptr<Clock> steady_clock();

/// Sliding-window limiter: at most `requests_per_minute` grants in any
/// half-open 60 s window [t, t + 60). Shared by every client of one endpoint.
class RateLimiter {
 public:
  RateLimiter(int requests_per_minute, std::shared_ptr<Clock> clock);

  /// Blocks (via the clock) until a grant is available, then records it.
  void acquire();

  /// Grant timestamps still inside the current window.
  std::vector<double> recent_grants() const;

  int requests_per_minute() const { return rpm_; }

 private:
  void prune(double now);

  int rpm_;
  std::shared_ptr<Clock> clock_;
  mutable std::mutex mu_;
  std::deque<double> grants_;
};

}  // namespace r2i
