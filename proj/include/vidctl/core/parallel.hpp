#pragma once

#include <cstdint>

namespace vidctl::core {

// Kernel execution mode. Every compute kernel has a serial reference
// implementation and an OpenMP one; the dispatchers in kernels.hpp pick the
// active mode. Tests pin Serial to compare both paths, the benchmark tool
// sweeps them.
enum class Exec { Serial, Parallel };

Exec exec_mode();
void set_exec_mode(Exec mode);

// Number of OpenMP threads the parallel kernels will use. Honors the
// VIDCTL_THREADS environment variable, falling back to omp_get_max_threads().
int num_threads();

// True when a parallel region is worth spinning up for `work` elements.
inline bool parallel_worthwhile(int64_t work) {
  return exec_mode() == Exec::Parallel && work >= 4096;
}

}  // namespace vidctl::core
