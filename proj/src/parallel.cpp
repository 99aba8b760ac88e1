#include "icdattn/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace icdattn {

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int effective_threads(int requested) {
  int t = std::max(1, requested);
  if (const char* env = std::getenv("ICD_ATTN_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) t = std::min(t, cap);
  }
#ifdef _OPENMP
  t = std::min(t, omp_get_max_threads());
#else
  t = 1;
#endif
  return t;
}

void parallel_for(int n, int threads, const std::function<void(int)>& f) {
  if (n <= 0) return;
#ifdef _OPENMP
  if (threads > 1 && n > 1) {
    std::exception_ptr error;
    std::mutex error_mutex;
#pragma omp parallel for schedule(static) num_threads(std::min(threads, n))
    for (int i = 0; i < n; ++i) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
    return;
  }
#else
  (void)threads;
#endif
  for (int i = 0; i < n; ++i) f(i);
}

}  // namespace icdattn
