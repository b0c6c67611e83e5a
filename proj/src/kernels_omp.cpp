#include "aeckit/kernels.hpp"
#include "kernels_impl.hpp"

AECKIT_INSTANTIATE_KERNELS(omp, true, float)
AECKIT_INSTANTIATE_KERNELS(omp, true, double)
