/*
 * Copyright 2026 The QAC Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "qac/clock.hpp"

#include <thread>

namespace qac {

void SteadyClock::sleep_until(TimePoint t) { std::this_thread::sleep_until(t); }

bool SteadyClock::wait_until(std::unique_lock<std::mutex>& lock,
                             std::condition_variable& cv, TimePoint deadline,
                             const std::function<bool()>& done) {
  return cv.wait_until(lock, deadline, done);
}

SteadyClock& SteadyClock::instance() {
  static SteadyClock clock;
  return clock;
}

Clock::TimePoint FakeClock::now() const {
  std::lock_guard lock(mu_);
  return now_;
}

void FakeClock::sleep_until(TimePoint t) {
  std::unique_lock lock(mu_);
  ++sleepers_;
  cv_.wait(lock, [&] { return now_ >= t; });
  --sleepers_;
}

bool FakeClock::wait_until(std::unique_lock<std::mutex>& lock,
                           std::condition_variable& cv, TimePoint deadline,
                           const std::function<bool()>& done) {
  // The waiter's condition variable is not ours, so poll fake time in short
  // real-time slices.
  while (!done()) {
    if (now() >= deadline) return done();
    cv.wait_for(lock, std::chrono::milliseconds(1));
  }
  return true;
}

void FakeClock::advance(Duration d) {
  {
    std::lock_guard lock(mu_);
    now_ += d;
  }
  cv_.notify_all();
}

int FakeClock::sleepers() const {
  std::lock_guard lock(mu_);
  return sleepers_;
}

}  // namespace qac
