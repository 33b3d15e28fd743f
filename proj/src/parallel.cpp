#include "cif/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef CIF_HAVE_OPENMP
#include <omp.h>
#endif

namespace cif {

void set_thread_count(int threads) {
#ifdef CIF_HAVE_OPENMP
  omp_set_num_threads(threads > 0 ? threads : omp_get_num_procs());
#else
  (void)threads;
#endif
}

int thread_count() {
#ifdef CIF_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int configure_threads_from_env() {
  int threads = 0;
  if (const char* env = std::getenv("CIF_THREADS")) {
    try {
      threads = std::stoi(env);
    } catch (const std::exception&) {
      threads = 0;
    }
  }
  set_thread_count(threads < 0 ? 0 : threads);
  return thread_count();
}

}  // namespace cif
