#pragma once

#include <cstddef>
#include <functional>
#include <memory>

namespace niv {

// Runs body(i) for i in [0, n) on the worker pool. Callers write results into
// disjoint slots, so output never depends on the worker count.
void parallel_for(size_t n, const std::function<void(size_t)>& body, size_t grain = 1);

// Caps worker threads for the lifetime of the returned guard. 0 keeps the
// default (NIV_THREADS environment variable, else hardware concurrency).
class ThreadLimit {
 public:
  explicit ThreadLimit(size_t threads);
  ~ThreadLimit();
  ThreadLimit(const ThreadLimit&) = delete;
  ThreadLimit& operator=(const ThreadLimit&) = delete;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

size_t default_thread_count();

}  // namespace niv
