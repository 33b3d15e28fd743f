#pragma once

namespace cif {

/// Applies the CIF_THREADS environment variable (0 or unset = all cores) to
/// the worker pool. Returns the resulting worker count.
int configure_threads_from_env();

void set_thread_count(int threads);
int thread_count();

}  // namespace cif
