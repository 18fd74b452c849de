#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gvimp {

/// Number of lanes to use: `requested`, or every hardware thread when 0.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Calls body(i) for i in [0, count) across `threads` lanes with static
/// contiguous chunks. body must only write state owned by index i. The first
/// exception (lowest index among those observed) is rethrown after all lanes join.
template <typename Body>
void parallel_for(std::size_t count, int threads, Body&& body) {
  const std::size_t lanes = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), count);
  if (lanes <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::mutex error_mutex;
  std::exception_ptr error;
  std::size_t error_index = count;
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(lanes - 1);
  const std::size_t chunk = (count + lanes - 1) / lanes;
  for (std::size_t lane = 1; lane < lanes; ++lane) {
    const std::size_t begin = lane * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(run, begin, end);
  }
  run(0, std::min(count, chunk));
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace gvimp
