#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace kdq {

/// Process-wide worker cap. 0 means hardware concurrency.
void set_threads(unsigned threads);
unsigned threads();

inline std::size_t chunk_count(std::size_t n, std::size_t grain) {
  return grain == 0 ? 0 : (n + grain - 1) / grain;
}

/// Calls fn(chunk, begin, end) for every fixed-size chunk of [0, n).
/// Chunk boundaries depend only on n and grain, never on the worker count,
/// so per-chunk partial results reduced in chunk order are thread-count
/// independent.
template <class Fn>
void parallel_chunks(std::size_t n, std::size_t grain, Fn&& fn) {
  const std::size_t chunks = chunk_count(n, grain);
  if (chunks == 0) return;
  const std::size_t workers = std::min<std::size_t>(threads(), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c, c * grain, std::min(n, (c + 1) * grain));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      try {
        fn(c, c * grain, std::min(n, (c + 1) * grain));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace kdq
