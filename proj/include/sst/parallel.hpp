#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sst {

/// Runs fn(chunk_begin, chunk_end) over [0, n) split into fixed-size chunks.
/// Chunk boundaries depend only on n and chunk, never on the thread count, so
/// any per-chunk arithmetic is identical between serial and parallel runs.
template <class Fn>
void parallel_chunks(std::size_t n, std::size_t chunk, int threads, Fn&& fn) {
  if (n == 0) return;
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  const auto run_chunk = [&](std::size_t c) {
    const std::size_t b = c * chunk;
    fn(b, std::min(n, b + chunk));
  };
  if (threads <= 1 || n_chunks == 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      try {
        run_chunk(c);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int n_workers = static_cast<int>(std::min<std::size_t>(threads, n_chunks));
  std::vector<std::thread> pool;
  pool.reserve(n_workers - 1);
  for (int i = 1; i < n_workers; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace sst
