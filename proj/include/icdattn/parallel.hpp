#pragma once

#include <functional>

namespace icdattn {

// Worker-thread cap: min(requested, ICD_ATTN_THREADS env var, omp max).
// The default of 1 keeps training single-threaded unless asked otherwise.
int effective_threads(int requested);

// Runs f(0..n-1) across `threads` OpenMP threads (static schedule), serially
// when threads <= 1 or OpenMP is unavailable. The first exception thrown by
// any iteration is rethrown on the calling thread.
void parallel_for(int n, int threads, const std::function<void(int)>& f);

bool openmp_enabled();

}  // namespace icdattn
