#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace gmmddpm {

// 0 means "all hardware threads".
unsigned resolve_threads(unsigned requested) noexcept;

// Runs body(begin, end) over contiguous blocks of [0, count). Bodies must only
// write to per-index outputs; any reduction happens afterwards on the calling
// thread so results do not depend on the worker count.
template <typename Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  const unsigned workers = resolve_threads(threads);
  if (count == 0) return;
  if (workers <= 1 || count < 2) {
    body(std::size_t{0}, count);
    return;
  }
  const std::size_t n_blocks = std::min<std::size_t>(workers, count);
  const std::size_t block = (count + n_blocks - 1) / n_blocks;

  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(n_blocks);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const std::size_t begin = b * block;
    const std::size_t end = std::min(count, begin + block);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace gmmddpm
