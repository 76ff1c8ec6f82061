#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>
#include <vector>

namespace duotilt {

// ============================================================================
// Random streams
// ============================================================================

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/**
 * @brief xoshiro256++ generator (UniformRandomBitGenerator).
 *
 * State is filled from a 64-bit key with SplitMix64, so any key gives a
 * valid non-zero state.
 */
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t key = 0) noexcept {
    std::uint64_t z = key;
    for (auto& w : s_) {
      z += 0x9E3779B97F4A7C15ULL;
      w = mix64(z);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0,1).
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

/**
 * @brief Keyed family of independent streams.
 *
 * path(i) depends only on (seed, i), so any partition of paths across
 * workers sees the same draws. child(tag) derives a new family, used for
 * stage-1 iterations, bisection iterates and similar sub-experiments.
 */
class RandomStreams {
 public:
  explicit RandomStreams(std::uint64_t seed = 0) noexcept : key_(mix64(seed)) {}

  Rng path(std::uint64_t index) const noexcept {
    return Rng(mix64(key_ ^ mix64(index + 0x632BE59BD9B4E019ULL)));
  }

  RandomStreams child(std::uint64_t tag) const noexcept {
    RandomStreams r;
    r.key_ = mix64(key_ + 0xD1B54A32D192ED03ULL * (tag + 1));
    return r;
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

// ============================================================================
// Parallel loop
// ============================================================================

/// 0 means "use the machine's hardware concurrency".
inline unsigned resolve_workers(unsigned workers) {
  if (workers > 0) return workers;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

/**
 * @brief Runs fn(task) for task in [0, n_tasks) on up to `workers` threads.
 *
 * Tasks are claimed dynamically; callers must write results into
 * task-indexed slots so the outcome does not depend on scheduling.
 * The first exception thrown by any task is rethrown on the caller.
 */
template <class Fn>
void parallel_tasks(std::size_t n_tasks, unsigned workers, Fn&& fn) {
  workers = std::min<unsigned>(resolve_workers(workers),
                               static_cast<unsigned>(std::max<std::size_t>(n_tasks, 1)));
  if (workers <= 1) {
    for (std::size_t t = 0; t < n_tasks; ++t) fn(t);
    return;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr error;
  auto body = [&] {
    for (;;) {
      std::size_t t;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (error || next >= n_tasks) return;
        t = next++;
      }
      try {
        fn(t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace duotilt
