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

#ifndef QAC_CLOCK_HPP_
#define QAC_CLOCK_HPP_

#include <chrono>
#include <condition_variable>
#include <functional>
#include <mutex>

namespace qac {

// Time source for deadline handling. Production code uses SteadyClock; tests
// drive FakeClock by hand so timeouts are reproducible.
class Clock {
 public:
  using Duration = std::chrono::steady_clock::duration;
  using TimePoint = std::chrono::steady_clock::time_point;

  virtual ~Clock() = default;

  virtual TimePoint now() const = 0;
  virtual void sleep_until(TimePoint t) = 0;
  void sleep_for(Duration d) { sleep_until(now() + d); }

  // Blocks on `cv` (with `lock` held on entry and exit) until `done()` holds
  // or the clock reaches `deadline`. Returns done().
  virtual bool wait_until(std::unique_lock<std::mutex>& lock,
                          std::condition_variable& cv, TimePoint deadline,
                          const std::function<bool()>& done) = 0;
};

class SteadyClock final : public Clock {
 public:
  TimePoint now() const override { return std::chrono::steady_clock::now(); }
  void sleep_until(TimePoint t) override;
  bool wait_until(std::unique_lock<std::mutex>& lock, std::condition_variable& cv,
                  TimePoint deadline, const std::function<bool()>& done) override;

  static SteadyClock& instance();
};

// Manually advanced clock. Time moves only through advance(); sleepers wake
// once the fake time passes their target.
class FakeClock final : public Clock {
 public:
  TimePoint now() const override;
  void sleep_until(TimePoint t) override;
  bool wait_until(std::unique_lock<std::mutex>& lock, std::condition_variable& cv,
                  TimePoint deadline, const std::function<bool()>& done) override;

  void advance(Duration d);
  // Number of threads currently blocked in sleep_until().
  int sleepers() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  TimePoint now_{};
  int sleepers_ = 0;
};

}  // namespace qac

#endif  // QAC_CLOCK_HPP_
