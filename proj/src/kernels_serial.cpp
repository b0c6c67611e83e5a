#include "aeckit/kernels.hpp"
#include "kernels_impl.hpp"

AECKIT_INSTANTIATE_KERNELS(serial, false, float)
AECKIT_INSTANTIATE_KERNELS(serial, false, double)
