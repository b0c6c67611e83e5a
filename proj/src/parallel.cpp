#include "aeckit/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

#include "aeckit/error.hpp"

namespace aeckit {

int configure_threads_from_env() {
  if (const char* env = std::getenv("AECKIT_THREADS"); env && *env) {
    std::size_t used = 0;
    int n = 0;
    try {
      n = std::stoi(env, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != std::string(env).size() || n < 1)
      throw Error(ErrorCode::InvalidArgument, std::string("AECKIT_THREADS must be a positive integer, got '") + env + "'");
    omp_set_num_threads(n);
  }
  return omp_get_max_threads();
}

}  // namespace aeckit
