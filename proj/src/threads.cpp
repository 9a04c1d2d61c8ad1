#include "defid/threads.hpp"

#include <cstdlib>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace defid {

int thread_count() {
    static const int cached = [] {
        int hw = static_cast<int>(std::thread::hardware_concurrency());
        if (hw < 1) hw = 1;
        if (const char* env = std::getenv("DEFID_THREADS")) {
            const int req = std::atoi(env);
            if (req >= 1 && req < hw) return req;
        }
        return hw;
    }();
    return cached;
}

void apply_thread_cap() {
#ifdef _OPENMP
    omp_set_num_threads(thread_count());
#endif
}

}  // namespace defid
