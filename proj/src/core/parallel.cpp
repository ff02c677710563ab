#include "vidctl/core/parallel.hpp"

#include <omp.h>

#include <atomic>
#include <cstdlib>

namespace vidctl::core {

namespace {
std::atomic<Exec> g_mode{Exec::Parallel};

int resolve_threads() {
  if (const char* env = std::getenv("VIDCTL_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return omp_get_max_threads();
}
}  // namespace

Exec exec_mode() { return g_mode.load(std::memory_order_relaxed); }

void set_exec_mode(Exec mode) { g_mode.store(mode, std::memory_order_relaxed); }

int num_threads() {
  static const int n = resolve_threads();
  return n;
}

}  // namespace vidctl::core
