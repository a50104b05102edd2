#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace mgm {

// Worker count from MGM_THREADS; 1 when unset or invalid.
inline int thread_count_from_env() {
  const char* s = std::getenv("MGM_THREADS");
  if (!s) return 1;
  try {
    const int v = std::stoi(s);
    if (v == 0) return std::max(1u, std::thread::hardware_concurrency());
    return std::max(1, v);
  } catch (...) {
    return 1;
  }
}

// Runs fn(i) for i in [0, count) on up to `threads` workers. The first
// exception thrown by any call is rethrown after all workers join.
template <typename F>
void parallel_for(std::size_t count, int threads, F&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  std::vector<std::jthread> pool;
  pool.reserve(n);
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

// SplitMix64 finaliser; derives independent RNG seeds from structured keys.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

template <typename... Keys>
std::uint64_t derive_seed(std::uint64_t base, Keys... keys) {
  std::uint64_t h = mix_seed(base);
  ((h = mix_seed(h ^ static_cast<std::uint64_t>(keys))), ...);
  return h;
}

}  // namespace mgm
