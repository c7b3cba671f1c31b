#pragma once

#include <atomic>
#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace flagdim::parallel {

// All Monte Carlo loops in this project write replica k's result into slot k
// of a preallocated array and reduce serially afterwards, so the parallel and
// serial paths produce bit-identical output.  run_serial() is the reference
// path kept for tests and for the bench tool.

// Process-wide switch forcing every run() onto the serial path.
inline std::atomic<bool>& serial_override() {
  static std::atomic<bool> flag{false};
  return flag;
}

template <typename Body>
void run_serial(std::ptrdiff_t n, const Body& body) {
  for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
}

template <typename Body>
void run(std::ptrdiff_t n, const Body& body) {
#ifdef _OPENMP
  if (serial_override()) {
    run_serial(n, body);
    return;
  }
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
#else
  run_serial(n, body);
#endif
}

inline bool enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

} // namespace flagdim::parallel
