#include "niv/parallel.hpp"

#include <tbb/blocked_range.h>
#include <tbb/global_control.h>
#include <tbb/parallel_for.h>

#include <cstdlib>
#include <string>
#include <thread>

namespace niv {

size_t default_thread_count() {
  if (const char* env = std::getenv("NIV_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<size_t>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(size_t n, const std::function<void(size_t)>& body, size_t grain) {
  if (n == 0) return;
  tbb::parallel_for(tbb::blocked_range<size_t>(0, n, std::max<size_t>(grain, 1)),
                    [&](const tbb::blocked_range<size_t>& r) {
                      for (size_t i = r.begin(); i != r.end(); ++i) body(i);
                    });
}

struct ThreadLimit::Impl {
  tbb::global_control control;
  explicit Impl(size_t n) : control(tbb::global_control::max_allowed_parallelism, n) {}
};

ThreadLimit::ThreadLimit(size_t threads)
    : impl_(std::make_unique<Impl>(threads == 0 ? default_thread_count() : threads)) {}
ThreadLimit::~ThreadLimit() = default;

}  // namespace niv
