#pragma once

namespace defid {

// Worker cap: min(DEFID_THREADS, hardware), at least 1. Read once.
int thread_count();

// Calls omp_set_num_threads(thread_count()); CLI entry points call this.
void apply_thread_cap();

}  // namespace defid
