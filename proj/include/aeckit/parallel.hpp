#pragma once

namespace aeckit {

// Applies AECKIT_THREADS (positive integer) as the OpenMP thread cap.
// Returns the resulting maximum thread count.
int configure_threads_from_env();

}  // namespace aeckit
