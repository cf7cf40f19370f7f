// Minimal fork-join helpers. Work is split into contiguous index ranges and
// per-range results are merged in index order.
#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace pgroup {

namespace detail {
inline std::atomic<unsigned>& thread_setting() {
  static std::atomic<unsigned> n{1};
  return n;
}
}  // namespace detail

/// 0 selects all hardware threads.
inline void set_num_threads(unsigned n) {
  if (n == 0) n = std::max(1U, std::thread::hardware_concurrency());
  detail::thread_setting().store(n);
}

inline unsigned num_threads() { return detail::thread_setting().load(); }

/// Calls fn(chunk, begin, end) over at most num_threads() contiguous chunks
/// of [0, n). Returns the number of chunks used.
template <typename Fn>
std::size_t parallel_chunks(std::size_t n, Fn&& fn, std::size_t min_chunk = 1024) {
  const std::size_t max_chunks = std::max<std::size_t>(1, n / std::max<std::size_t>(1, min_chunk));
  const std::size_t chunks = std::min<std::size_t>(num_threads(), max_chunks);
  if (chunks <= 1) {
    fn(std::size_t{0}, std::size_t{0}, n);
    return 1;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(chunks);
  workers.reserve(chunks - 1);
  auto run = [&](std::size_t c) {
    try {
      fn(c, n * c / chunks, n * (c + 1) / chunks);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  for (std::size_t c = 1; c < chunks; ++c) workers.emplace_back(run, c);
  run(0);
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return chunks;
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t min_chunk = 1024) {
  parallel_chunks(
      n,
      [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      },
      min_chunk);
}

/// Runs two independent tasks, concurrently when more than one thread is allowed.
template <typename F, typename G>
void parallel_invoke(F&& f, G&& g) {
  if (num_threads() <= 1) {
    f();
    g();
    return;
  }
  std::exception_ptr err;
  std::thread t([&] {
    try {
      g();
    } catch (...) {
      err = std::current_exception();
    }
  });
  try {
    f();
  } catch (...) {
    t.join();
    throw;
  }
  t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace pgroup
