#include "r2i/rate_limiter.hpp"

#include <thread>

#include "r2i/error.hpp"

namespace r2i {

double SteadyClock::now() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

void SteadyClock::sleep_for(double seconds) {
  if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

double FakeClock::now() {
  std::lock_guard lock(mu_);
  return now_;
}

void FakeClock::sleep_for(double seconds) {
  if (seconds <= 0) return;
  std::lock_guard lock(mu_);
  now_ += seconds;
  slept_ += seconds;
}

void FakeClock::sleep_until(double deadline) {
  std::lock_guard lock(mu_);
  if (deadline > now_) {
    slept_ += deadline - now_;
    now_ = deadline;
  }
}

double FakeClock::slept() const {
  std::lock_guard lock(mu_);
  return slept_;
}

std::shared_ptr<Clock> steady_clock() {
  static auto clock = std::make_shared<SteadyClock>();
  return clock;
}

RateLimiter::RateLimiter(int requests_per_minute, std::shared_ptr<Clock> clock)
    : rpm_(requests_per_minute), clock_(std::move(clock)) {
  if (rpm_ < 1) throw PreconditionError("requests_per_minute must be >= 1");
}

void RateLimiter::prune(double now) {
  while (!grants_.empty() && grants_.front() + 60.0 <= now) grants_.pop_front();
}

void RateLimiter::acquire() {
  std::unique_lock lock(mu_);
  for (;;) {
    const double now = clock_->now();
    prune(now);
    if (static_cast<int>(grants_.size()) < rpm_) {
      grants_.push_back(now);
      return;
    }
    const double deadline = grants_.front() + 60.0;
    lock.unlock();
    clock_->sleep_until(deadline);
    lock.lock();
  }
}

std::vector<double> RateLimiter::recent_grants() const {
  std::lock_guard lock(mu_);
  return {grants_.begin(), grants_.end()};
}

}  // namespace r2i
